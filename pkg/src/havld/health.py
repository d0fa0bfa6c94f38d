"""Backend health monitoring: probes, hysteresis, pool reconciliation.

Probing and state bookkeeping are split so the simulator can drive
``record``/``reconcile`` with synthetic probe results on a virtual
clock while live mode uses real sockets.
"""

from __future__ import annotations

import http.client
import socket
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

from .director import Director, UnknownBackendError
from .scheduling import RealServer


class ProbeKind(Enum):
    TCP_CONNECT = "tcp"
    HTTP_GET = "http"


class FailureReason(Enum):
    TIMEOUT = "timeout"
    REFUSED = "refused"
    BAD_STATUS = "bad-status"


class Transition(Enum):
    NONE = "none"
    WENT_DOWN = "went-down"
    CAME_UP = "came-up"


@dataclass(frozen=True)
class ProbeSpec:
    kind: ProbeKind = ProbeKind.TCP_CONNECT
    path: str = "/"
    expect_status: int = 200
    interval: float = 2.0
    timeout: float = 1.0
    fall: int = 3  # consecutive failures before marking down
    rise: int = 2  # consecutive successes before marking up

    def __post_init__(self):
        if self.fall < 1 or self.rise < 1:
            raise ValueError("fall and rise must be >= 1")
        if not self.timeout < self.interval:
            raise ValueError("probe timeout must be smaller than the interval")


@dataclass(frozen=True)
class ProbeResult:
    ok: bool
    reason: Optional[FailureReason] = None
    detail: str = ""

    @classmethod
    def success(cls) -> "ProbeResult":
        return cls(ok=True)

    @classmethod
    def failure(cls, reason: FailureReason, detail: str = "") -> "ProbeResult":
        return cls(ok=False, reason=reason, detail=detail)


@dataclass
class HealthState:
    """Per-backend hysteresis counters; at most one streak is nonzero."""

    consecutive_failures: int = 0
    consecutive_successes: int = 0
    alive: bool = True


def probe(backend: RealServer, spec: ProbeSpec) -> ProbeResult:
    """Live probe of one backend over real sockets.

    TCP_CONNECT succeeds iff a connection completes within the timeout;
    HTTP_GET additionally requires the expected status code.  All
    failures are results, never exceptions.
    """
    host, _, port = backend.address.rpartition(":")
    if spec.kind is ProbeKind.TCP_CONNECT:
        try:
            with socket.create_connection((host, int(port)), timeout=spec.timeout):
                return ProbeResult.success()
        except (socket.timeout, TimeoutError) as exc:
            return ProbeResult.failure(FailureReason.TIMEOUT, str(exc))
        except OSError as exc:
            return ProbeResult.failure(FailureReason.REFUSED, str(exc))
    conn = http.client.HTTPConnection(host, int(port), timeout=spec.timeout)
    try:
        conn.request("GET", spec.path)
        status = conn.getresponse().status
    except (socket.timeout, TimeoutError) as exc:
        return ProbeResult.failure(FailureReason.TIMEOUT, str(exc))
    except (OSError, http.client.HTTPException) as exc:
        return ProbeResult.failure(FailureReason.REFUSED, str(exc))
    finally:
        conn.close()
    if status != spec.expect_status:
        return ProbeResult.failure(FailureReason.BAD_STATUS, f"status {status}")
    return ProbeResult.success()


def record(state: HealthState, result: ProbeResult, spec: ProbeSpec) -> Tuple[HealthState, Transition]:
    """Fold one probe result into the hysteresis counters.

    ``alive`` flips to False only after ``fall`` consecutive failures and
    back to True only after ``rise`` consecutive successes; the flip is
    reported exactly once.
    """
    if result.ok:
        state.consecutive_failures = 0
        state.consecutive_successes += 1
        if not state.alive and state.consecutive_successes >= spec.rise:
            state.alive = True
            return state, Transition.CAME_UP
    else:
        state.consecutive_successes = 0
        state.consecutive_failures += 1
        if state.alive and state.consecutive_failures >= spec.fall:
            state.alive = False
            return state, Transition.WENT_DOWN
    return state, Transition.NONE


def reconcile(director: Director, backend_id: str, transition: Transition, now: float) -> None:
    """Apply a liveness flip to the director's pools.

    WENT_DOWN also force-releases the backend's in-flight connections so
    dead flows don't pin the counters.  Calling with NONE is a contract
    violation.
    """
    if transition is Transition.NONE:
        raise ValueError("reconcile requires an actual transition")
    director.set_backend_alive(backend_id, transition is Transition.CAME_UP, now)


class HealthMonitor:
    """Tracks one HealthState per backend and applies flips to a director.

    ``apply`` is clock-agnostic (the simulator feeds it synthetic results);
    ``run`` drives live socket probes on daemon threads.
    """

    def __init__(self, director: Director, specs: Dict[str, ProbeSpec]):
        self.director = director
        self.specs = specs
        self.states: Dict[str, HealthState] = {b: HealthState() for b in specs}

    def apply(self, backend_id: str, result: ProbeResult, now: float) -> Transition:
        state = self.states[backend_id]
        _, transition = record(state, result, self.specs[backend_id])
        if transition is not Transition.NONE:
            try:
                reconcile(self.director, backend_id, transition, now)
            except UnknownBackendError:
                pass  # backend removed from every pool since the probe launched
        return transition

    def run(
        self,
        stop: threading.Event,
        lock: threading.Lock,
        on_transition: Optional[Callable[[str, Transition], None]] = None,
    ) -> None:
        """Probe every monitored backend until ``stop`` is set.

        Probes run concurrently across backends; record/reconcile happen
        under ``lock`` to honour the director's single-owner contract.
        """

        def loop(backend_id: str) -> None:
            spec = self.specs[backend_id]
            backend = self._find(backend_id)
            while not stop.is_set():
                result = probe(backend, spec)
                with lock:
                    transition = self.apply(backend_id, result, time.monotonic())
                if transition is not Transition.NONE and on_transition:
                    on_transition(backend_id, transition)
                stop.wait(spec.interval)

        for backend_id in self.specs:
            t = threading.Thread(target=loop, args=(backend_id,), daemon=True)
            t.start()

    def _find(self, backend_id: str) -> RealServer:
        for svc in self.director.services.values():
            for rs in svc.pool:
                if rs.id == backend_id:
                    return rs
        raise UnknownBackendError(backend_id)
