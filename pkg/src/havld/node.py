"""Live director node: heartbeat loop + health monitor + proxy data plane.

One LiveDirector is a whole director host.  The heartbeat loop drives
the failover state machine on the wall clock; becoming Active starts a
proxy listener on every virtual endpoint, losing the role (or failing
to bind) stops them.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from typing import List, Optional

from . import failover
from .config import ClusterConfig
from .director import build_director
from .health import FailureReason, HealthMonitor, ProbeResult, Transition
from .proxy import ProxyServer

log = logging.getLogger("havld.node")


class LiveDirector:
    def __init__(self, config: ClusterConfig, which: str):
        if which not in ("primary", "backup"):
            raise ValueError(f"node must be primary or backup, not {which!r}")
        self.config = config
        self.which = which
        self.me = config.node(which)
        self.peer = config.node("backup" if which == "primary" else "primary")
        self.lock = threading.Lock()
        self.director = build_director(config)
        specs = {}
        for svc in config.services:
            for server in svc.servers:
                specs.setdefault(server.name, svc.probe)
        self.monitor = HealthMonitor(self.director, specs)
        self.role = failover.NodeRole(
            node_id=1 if which == "primary" else 2,
            priority=self.me.priority,
            configured_primary=which == "primary",
            started_at=time.monotonic(),
        )
        self.failover_cfg = failover.FailoverConfig(
            interval=config.heartbeat.interval_s,
            dead_factor=config.heartbeat.dead_factor,
            preempt=config.heartbeat.preempt,
        )
        self._proxies: List[ProxyServer] = []
        self._sock: Optional[socket.socket] = None

    # -- lifecycle ---------------------------------------------------------

    def run(self, stop: threading.Event) -> None:
        """Blocks until ``stop``; raises OSError if the heartbeat bind fails."""
        port = self.config.heartbeat.port
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((self.me.address, port))
        self._sock.setblocking(False)
        log.info("%s up as %s node, heartbeat on %s:%d", self.me.name, self.which, self.me.address, port)

        self.monitor.run(stop, self.lock, on_transition=self._log_transition)
        interval = self.config.heartbeat.interval_s
        try:
            while not stop.is_set():
                started = time.monotonic()
                self._tick(started)
                stop.wait(max(0.0, interval - (time.monotonic() - started)))
        finally:
            self._stop_proxies()
            self._sock.close()
            log.info("%s stopped", self.me.name)

    def _tick(self, now: float) -> None:
        inbox = []
        while True:
            try:
                data, _ = self._sock.recvfrom(256)
            except (BlockingIOError, OSError):
                break
            try:
                inbox.append(failover.decode(data))
            except failover.MalformedHeartbeat as exc:
                log.warning("dropping malformed heartbeat: %s", exc)
        before = self.role.state
        _, actions = failover.tick(self.role, now, inbox, self.failover_cfg)
        if self.role.state is not before:
            log.info("failover state %s -> %s", before.name.lower(), self.role.state.name.lower())
        for action in actions:
            if isinstance(action, failover.SendHeartbeat):
                try:
                    self._sock.sendto(
                        failover.encode(action.message),
                        (self.peer.address, self.config.heartbeat.port),
                    )
                except OSError as exc:
                    log.warning("heartbeat send failed: %s", exc)
            elif isinstance(action, failover.AcquireVip):
                self._acquire_vip(now)
            elif isinstance(action, failover.ReleaseVip):
                log.info("releasing virtual endpoints")
                self._stop_proxies()

    # -- VIP / data plane ----------------------------------------------------

    def _acquire_vip(self, now: float) -> None:
        started: List[ProxyServer] = []
        try:
            for svc in self.config.services:
                proxy = ProxyServer(
                    self.director,
                    svc.vip,
                    svc.port,
                    lock=self.lock,
                    on_backend_error=self._backend_hint,
                )
                proxy.start()
                started.append(proxy)
        except OSError as exc:
            log.error("virtual endpoint acquisition failed: %s", exc)
            for proxy in started:
                proxy.stop()
            self.role.mark_vip_failed(now)
            return
        self._proxies = started
        log.info("serving %d virtual endpoint(s)", len(started))

    def _stop_proxies(self) -> None:
        for proxy in self._proxies:
            proxy.stop()
        self._proxies = []

    # -- health plumbing -------------------------------------------------------

    def _backend_hint(self, backend_id: str) -> None:
        # a proxied connect just failed; count it like a failed probe
        with self.lock:
            transition = self.monitor.apply(
                backend_id,
                ProbeResult.failure(FailureReason.REFUSED, "proxy connect failed"),
                time.monotonic(),
            )
        if transition is not Transition.NONE:
            self._log_transition(backend_id, transition)

    @staticmethod
    def _log_transition(backend_id: str, transition: Transition) -> None:
        if transition is Transition.WENT_DOWN:
            log.warning("backend %s marked down", backend_id)
        elif transition is Transition.CAME_UP:
            log.info("backend %s back up", backend_id)
