"""Live TCP data plane: virtual-endpoint proxy and a stand-in web backend.

The proxy accepts client connections on a virtual endpoint, admits each
one through the director (which picks the backend and tracks the flow),
splices bytes both ways, and releases the flow when either side closes.
Scheduling is per connection, so one curl request equals one admit.
"""

from __future__ import annotations

import socket
import threading
import time
from typing import Callable, Optional, Tuple

from .director import AdmitError, Director

_CHUNK = 65536


def _pump(src: socket.socket, dst: socket.socket) -> None:
    """Copy until EOF, then half-close the destination."""
    try:
        while True:
            data = src.recv(_CHUNK)
            if not data:
                break
            dst.sendall(data)
    except OSError:
        pass
    try:
        dst.shutdown(socket.SHUT_WR)
    except OSError:
        pass


class ProxyServer:
    """Serves one virtual endpoint for a director.

    Many connections may be in flight at once; every admit/release goes
    through ``lock`` so the director sees serialized operations.
    """

    def __init__(
        self,
        director: Director,
        host: str,
        port: int,
        lock: Optional[threading.Lock] = None,
        connect_timeout: float = 5.0,
        on_backend_error: Optional[Callable[[str], None]] = None,
    ):
        self.director = director
        self.host = host
        self.port = port
        self.lock = lock or threading.Lock()
        self.connect_timeout = connect_timeout
        self.on_backend_error = on_backend_error
        self.service = director.service_at(host, port)
        self._stop = threading.Event()
        self._listener: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        """Bind and start accepting; raises OSError if the bind fails."""
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(64)
        listener.settimeout(0.2)
        self._listener = listener
        self._stop.clear()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._handle, args=(conn, addr), daemon=True).start()

    def _handle(self, conn: socket.socket, addr: Tuple[str, int]) -> None:
        client = f"{addr[0]}:{addr[1]}"
        key = self.service.key
        try:
            with self.lock:
                backend_id = self.director.admit(key, client, time.monotonic())
        except AdmitError:
            conn.close()  # nothing to serve with; refuse immediately
            return

        backend = next(rs for rs in self.service.pool if rs.id == backend_id)
        host, _, port = backend.address.rpartition(":")
        try:
            upstream = socket.create_connection((host, int(port)), timeout=self.connect_timeout)
        except OSError:
            self._release(key, client)
            conn.close()
            if self.on_backend_error:
                self.on_backend_error(backend_id)
            return
        upstream.settimeout(None)
        conn.settimeout(None)

        t = threading.Thread(target=_pump, args=(conn, upstream), daemon=True)
        t.start()
        _pump(upstream, conn)
        t.join()
        upstream.close()
        conn.close()
        self._release(key, client)

    def _release(self, key, client: str) -> None:
        with self.lock:
            try:
                self.director.release(key, client, time.monotonic())
            except Exception:
                pass  # flow already force-released by the health monitor


def serve(
    virtual_endpoint: Tuple[str, int],
    director: Director,
    stop: Optional[threading.Event] = None,
    lock: Optional[threading.Lock] = None,
) -> None:
    """Run the proxy for one endpoint until ``stop`` is set."""
    server = ProxyServer(director, virtual_endpoint[0], virtual_endpoint[1], lock=lock)
    server.start()
    try:
        (stop or threading.Event()).wait()
    finally:
        server.stop()


class HttpBackend:
    """Minimal HTTP/1.1 responder standing in for a real web server.

    Answers every GET/HEAD with a fixed body and a ``serve_server``
    header carrying the instance name, so a client can tell which
    backend handled it.
    """

    def __init__(
        self,
        name: str,
        port: int,
        host: str = "127.0.0.1",
        body: Optional[bytes] = None,
        status: int = 200,
        response_delay: float = 0.0,
    ):
        self.name = name
        self.host = host
        self.port = port
        self.body = body if body is not None else (
            b"<html><body>served by " + name.encode() + b"</body></html>\n"
        )
        self.status = status
        self.response_delay = response_delay
        self._stop = threading.Event()
        self._listener: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def start(self) -> None:
        """Raises OSError when the port is already taken."""
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(64)
        listener.settimeout(0.2)
        self._listener = listener
        self._stop.clear()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._respond, args=(conn,), daemon=True).start()

    def _respond(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(5.0)
            data = b""
            while b"\r\n\r\n" not in data and b"\n\n" not in data:
                chunk = conn.recv(4096)
                if not chunk:
                    return
                data += chunk
            method = data.split(None, 1)[0].upper() if data.split() else b"GET"
            if self.response_delay:
                time.sleep(self.response_delay)
            reason = {200: "OK", 500: "Internal Server Error", 503: "Service Unavailable"}.get(
                self.status, "Status"
            )
            head = (
                f"HTTP/1.1 {self.status} {reason}\r\n"
                f"serve_server: {self.name}\r\n"
                f"Content-Type: text/html; charset=UTF-8\r\n"
                f"Content-Length: {len(self.body)}\r\n"
                f"Connection: close\r\n"
                f"\r\n"
            ).encode()
            conn.sendall(head if method == b"HEAD" else head + self.body)
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass


def run_backend(name: str, port: int, host: str = "127.0.0.1") -> None:
    """Blocking runner for the CLI; stops on KeyboardInterrupt."""
    backend = HttpBackend(name, port, host=host)
    backend.start()
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        backend.stop()
