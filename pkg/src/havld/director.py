"""Virtual services and the connection table.

The director owns every virtual service, maps new client flows to
backends through the per-service scheduler, and keeps the
active/inactive counters the scheduler reads.  All operations take an
explicit ``now``; the unit (wall seconds or simulated milliseconds) is
the caller's choice as long as it is consistent with the configured
``inactive_ttl``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .scheduling import RealServer, SchedulerKind, SchedulerState, select

ServiceKey = Tuple[str, int, str]  # (vip, port, protocol)

TABLE_HEADER = "IP Virtual Server version 1.2.1 (size=4096)"
TABLE_COLUMNS = "Prot LocalAddress:Port Scheduler Flags"
TABLE_REMOTE_COLUMNS = (
    "  -> " + "RemoteAddress:Port".ljust(28) + " Forward Weight ActiveConn InActConn"
)

# Only ports the table prints symbolically; everything else stays numeric
# so output never depends on the host's services database.
_PORT_NAMES = {80: "http", 443: "https"}


class AdmitError(Exception):
    """A connection could not be admitted."""


class UnknownServiceError(AdmitError):
    pass


class NoBackendAvailable(AdmitError):
    pass


class UnknownConnectionError(Exception):
    pass


class UnknownBackendError(Exception):
    pass


class ConnState(Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"


@dataclass
class ConnectionEntry:
    client: str
    service: ServiceKey
    backend: str
    state: ConnState = ConnState.ACTIVE
    expires_at: Optional[float] = None


@dataclass
class VirtualService:
    """One (vip, port, protocol) endpoint bound to a scheduler and pool."""

    name: str
    vip: str
    port: int
    scheduler: SchedulerKind
    pool: List[RealServer]
    protocol: str = "TCP"
    forward_label: str = "Route"  # display only; the data plane is a proxy
    inactive_ttl: float = 15.0
    state: SchedulerState = field(init=False)

    def __post_init__(self):
        self.state = SchedulerState(self.scheduler)
        ids = [rs.id for rs in self.pool]
        if len(ids) != len(set(ids)):
            raise ValueError(f"service {self.name}: duplicate server ids in pool")

    @property
    def key(self) -> ServiceKey:
        return (self.vip, self.port, self.protocol)


def _port_label(port: int) -> str:
    return _PORT_NAMES.get(port, str(port))


class Director:
    """Single logical owner of services and the connection table.

    Not internally synchronized: concurrent callers (proxy handlers,
    health monitor) must serialize through one lock, which keeps each
    operation atomic with respect to the others.
    """

    def __init__(self):
        self.services: Dict[ServiceKey, VirtualService] = {}
        self._conns: Dict[Tuple[str, ServiceKey], ConnectionEntry] = {}

    def add_service(self, svc: VirtualService) -> None:
        if svc.key in self.services:
            raise ValueError(f"duplicate virtual service {svc.key}")
        self.services[svc.key] = svc

    def service(self, key: ServiceKey) -> VirtualService:
        try:
            return self.services[key]
        except KeyError:
            raise UnknownServiceError(f"no virtual service {key}") from None

    def service_at(self, host: str, port: int, protocol: str = "TCP") -> VirtualService:
        return self.service((host, port, protocol))

    # -- connection lifecycle -------------------------------------------

    def admit(self, service_key: ServiceKey, client: str, now: float) -> str:
        """Schedule a new client flow; returns the chosen backend id.

        Raises UnknownServiceError / NoBackendAvailable; the caller must
        refuse the connection on either.
        """
        svc = self.service(service_key)
        ck = (client, service_key)
        existing = self._conns.get(ck)
        if existing is not None:
            if existing.state is ConnState.ACTIVE:
                # one entry per (client, service); re-admitting an active
                # flow is a caller bug
                raise ValueError(f"connection {ck} already active")
            # port reuse after release: drop the lingering inactive entry
            self._drop_entry(ck, existing)
        backend = select(svc.state, svc.pool)
        if backend is None:
            raise NoBackendAvailable(f"no eligible backend for {svc.name}")
        self._conns[ck] = ConnectionEntry(client=client, service=service_key, backend=backend)
        self._server(svc, backend).active_conns += 1
        return backend

    def release(self, service_key: ServiceKey, client: str, now: float) -> None:
        """Flow finished: Active -> Inactive, expiring after the service TTL."""
        svc = self.service(service_key)
        ck = (client, service_key)
        entry = self._conns.get(ck)
        if entry is None or entry.state is not ConnState.ACTIVE:
            raise UnknownConnectionError(f"no active connection for {ck}")
        entry.state = ConnState.INACTIVE
        entry.expires_at = now + svc.inactive_ttl
        rs = self._server(svc, entry.backend)
        rs.dec_active()
        rs.inactive_conns += 1

    def expire(self, now: float) -> int:
        """Remove inactive entries whose TTL has passed; returns the count."""
        doomed = [
            (ck, e)
            for ck, e in self._conns.items()
            if e.state is ConnState.INACTIVE and e.expires_at is not None and e.expires_at <= now
        ]
        for ck, entry in doomed:
            self._drop_entry(ck, entry)
        return len(doomed)

    def _drop_entry(self, ck, entry: ConnectionEntry) -> None:
        svc = self.services[entry.service]
        if entry.state is ConnState.INACTIVE:
            self._server(svc, entry.backend).dec_inactive()
        else:
            self._server(svc, entry.backend).dec_active()
        del self._conns[ck]

    @staticmethod
    def _server(svc: VirtualService, backend_id: str) -> RealServer:
        for rs in svc.pool:
            if rs.id == backend_id:
                return rs
        raise UnknownBackendError(f"service {svc.name}: no server {backend_id}")

    # -- backend liveness -----------------------------------------------

    def set_backend_alive(self, backend_id: str, alive: bool, now: float) -> List[ServiceKey]:
        """Flip a backend's alive flag in every service that pools it.

        Going down force-releases the backend's active flows so counters
        stay conserved; either direction resets the affected schedulers.
        Returns the affected service keys; raises UnknownBackendError if
        no service pools the backend.
        """
        affected: List[ServiceKey] = []
        for key, svc in self.services.items():
            for rs in svc.pool:
                if rs.id != backend_id:
                    continue
                affected.append(key)
                if rs.alive != alive:
                    rs.alive = alive
                    svc.state.note_pool_change()
                    if not alive:
                        self._force_release(key, backend_id, now)
        if not affected:
            raise UnknownBackendError(f"no service pools backend {backend_id}")
        return affected

    def _force_release(self, service_key: ServiceKey, backend_id: str, now: float) -> None:
        for (client, key), entry in list(self._conns.items()):
            if key == service_key and entry.backend == backend_id and entry.state is ConnState.ACTIVE:
                self.release(service_key, client, now)

    # -- introspection ---------------------------------------------------

    def connections(self) -> List[ConnectionEntry]:
        return list(self._conns.values())

    def render_table(self) -> str:
        """ipvsadm-style listing of services, backends and counters.

        Byte-stable for identical director state; golden-file tested.
        """
        lines = [TABLE_HEADER, TABLE_COLUMNS, TABLE_REMOTE_COLUMNS]
        for svc in self.services.values():
            lines.append(f"TCP {svc.name}:{_port_label(svc.port)} {svc.scheduler.value}")
            for rs in svc.pool:
                rport = rs.address.rsplit(":", 1)[1] if ":" in rs.address else str(svc.port)
                label = f"{rs.id}:{_port_label(int(rport))}"
                lines.append(
                    f"  -> {label:<28} {svc.forward_label} "
                    f"{rs.weight} {rs.active_conns} {rs.inactive_conns}"
                )
        return "\n".join(lines) + "\n"


def build_director(cfg, ttl_scale: float = 1.0) -> Director:
    """Fresh director (own server objects and counters) from a ClusterConfig.

    ``ttl_scale`` converts the configured TTL seconds into the caller's
    clock unit (the simulator passes 1000 for milliseconds).
    """
    d = Director()
    for svc_cfg in cfg.services:
        pool = [
            RealServer(id=s.name, address=s.address, weight=s.weight)
            for s in svc_cfg.servers
        ]
        d.add_service(
            VirtualService(
                name=svc_cfg.name,
                vip=svc_cfg.vip,
                port=svc_cfg.port,
                scheduler=svc_cfg.scheduler,
                pool=pool,
                forward_label=svc_cfg.forward_label,
                inactive_ttl=svc_cfg.inactive_ttl_s * ttl_scale,
            )
        )
    return d
