"""Deterministic discrete-event simulation of the whole cluster.

Two director nodes and N web servers run the production scheduler,
director, health and failover code against a virtual millisecond clock
and in-memory channels.  Heartbeats travel as real encoded datagrams
with zero link delay (the reference deployment measures sub-millisecond
LAN pings), probes of a dead or partitioned backend fail by timeout,
and a crashed node's probe/tick chains die with it.

The run starts from the steady state the experiments assume: the
configured primary is Active and holds the VIP, the backup is Backup.
Cold-start behaviour is still covered, because a recovered director
boots into Init.

Everything is single-threaded and seeded; identical (config, scenario,
seed) yields a byte-identical trace.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .. import failover
from ..config import ClusterConfig, NodeSpec
from ..director import Director, NoBackendAvailable, build_director
from ..health import HealthMonitor, ProbeResult, FailureReason, Transition
from .scenario import EventKind, ScenarioEvent


class InvalidTopology(ValueError):
    pass


@dataclass
class SharedStore:
    """Content every web server serves; the storage tier of the cluster."""

    documents: Dict[str, bytes] = field(
        default_factory=lambda: {"/": b"<html><body>It works!</body></html>\n"}
    )

    def read(self, path: str) -> bytes:
        return self.documents.get(path, b"")


@dataclass
class SimMetrics:
    requests: int = 0
    per_server_served: Dict[str, int] = field(default_factory=dict)
    refused: int = 0
    downtime_ms: int = 0
    failover_latency_ms: int = 0

    @property
    def served(self) -> int:
        return sum(self.per_server_served.values())

    def summary(self) -> str:
        lines = [
            f"requests={self.requests}",
            f"served={self.served}",
            f"refused={self.refused}",
            f"downtime_ms={self.downtime_ms}",
            f"failover_latency_ms={self.failover_latency_ms}",
        ]
        lines += [f"served[{name}]={n}" for name, n in self.per_server_served.items()]
        return "\n".join(lines) + "\n"


@dataclass
class _WebNode:
    name: str
    address: str
    alive: bool = True
    epoch: int = 0


@dataclass
class _DirectorNode:
    name: str
    spec: NodeSpec
    node_id: int
    alive: bool = True
    epoch: int = 0
    director: Optional[Director] = None
    monitor: Optional[HealthMonitor] = None
    role: Optional[failover.NodeRole] = None
    inbox: List[bytes] = field(default_factory=list)


class ClusterSim:
    """Builds the topology from a ClusterConfig and runs scenarios."""

    def __init__(self, config: ClusterConfig, store: Optional[SharedStore] = None):
        if not config.services:
            raise InvalidTopology("topology needs at least one virtual service")
        self.config = config
        self.store = store if store is not None else SharedStore()
        self.interval_ms = round(config.heartbeat.interval_s * 1000)
        if self.interval_ms <= 0:
            raise InvalidTopology("heartbeat interval must be positive")
        self.failover_cfg = failover.FailoverConfig(
            interval=self.interval_ms,
            dead_factor=config.heartbeat.dead_factor,
            preempt=config.heartbeat.preempt,
        )
        self.service_key = (
            config.services[0].vip,
            config.services[0].port,
            "TCP",
        )

    # -- one run ---------------------------------------------------------

    def run(self, events: List[ScenarioEvent], seed: int = 0) -> Tuple[SimMetrics, List[str]]:
        events = sorted(events, key=lambda e: e.at_ms)  # stable: keeps file order on ties
        self._validate(events)
        self._rng = random.Random(seed)

        cfg = self.config
        self.directors: Dict[str, _DirectorNode] = {}
        for node_id, spec in enumerate((cfg.primary_node, cfg.backup_node), start=1):
            self.directors[spec.name] = _DirectorNode(name=spec.name, spec=spec, node_id=node_id)
        self.webs: Dict[str, _WebNode] = {}
        for svc in cfg.services:
            for server in svc.servers:
                self.webs.setdefault(server.name, _WebNode(name=server.name, address=server.address))

        self.partitions = set()
        self.vip_holders: List[str] = []
        self.trace: List[str] = []
        self.metrics = SimMetrics(
            per_server_served={name: 0 for name in self.webs}
        )
        self._heap: List[tuple] = []
        self._seq = 0
        self._episode_start: Optional[int] = None
        self._pending_crashes: List[int] = []
        self._request_no = 0

        horizon = events[-1].at_ms if events else 0
        for ev in events:
            self._push(ev.at_ms, self._scenario_event, ev)

        # steady state: primary active and holding the VIP, backup standing by
        primary, backup = self.directors.values()
        self._boot_director(primary, now=0, initial=failover.NodeState.ACTIVE)
        self._boot_director(backup, now=0, initial=failover.NodeState.BACKUP)
        self.vip_holders.append(primary.name)

        self._stopped = False
        while self._heap and not self._stopped:
            t, _, fn, args = heapq.heappop(self._heap)
            if t > horizon:
                break
            fn(t, *args)

        if self._episode_start is not None:
            self.metrics.downtime_ms += horizon - self._episode_start
            self._episode_start = None
        assert self.metrics.served + self.metrics.refused == self.metrics.requests
        return self.metrics, self.trace

    # -- setup helpers -----------------------------------------------------

    def _validate(self, events: List[ScenarioEvent]) -> None:
        known = {self.config.primary_node.name, self.config.backup_node.name}
        for svc in self.config.services:
            known.update(s.name for s in svc.servers)
        for ev in events:
            names = ev.args if ev.kind is not EventKind.CLIENT_REQUEST else ()
            for name in names:
                if ev.kind in (EventKind.CRASH_NODE, EventKind.RECOVER_NODE,
                               EventKind.PARTITION_LINK, EventKind.HEAL_LINK) and name not in known:
                    raise InvalidTopology(f"scenario references unknown node {name!r}")
            if ev.kind in (EventKind.PARTITION_LINK, EventKind.HEAL_LINK) and ev.args[0] == ev.args[1]:
                raise InvalidTopology(f"cannot partition {ev.args[0]!r} from itself")

    def _boot_director(self, d: _DirectorNode, now: int, initial=failover.NodeState.INIT) -> None:
        d.director = build_director(self.config, ttl_scale=1000.0)
        specs = {}
        for svc in self.config.services:
            for server in svc.servers:
                specs.setdefault(server.name, svc.probe)
        d.monitor = HealthMonitor(d.director, specs)
        d.role = failover.NodeRole(
            node_id=d.node_id,
            priority=d.spec.priority,
            configured_primary=d.spec.name == self.config.primary_node.name,
            started_at=now,
            state=initial,
            vip_held=initial is failover.NodeState.ACTIVE,
        )
        d.inbox = []
        self._push(now, self._tick, d, d.epoch)
        for backend_id, spec in d.monitor.specs.items():
            self._push(now, self._probe_launch, d, d.epoch, backend_id, round(spec.interval * 1000), round(spec.timeout * 1000))

    def _push(self, t: int, fn, *args) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, fn, args))

    def _log(self, t: int, component: str, event: str, detail: str = "") -> None:
        line = f"{t} {component} {event}"
        if detail:
            line += f" {detail}"
        self.trace.append(line)

    def _link_ok(self, a: str, b: str) -> bool:
        return frozenset((a, b)) not in self.partitions

    # -- scenario events ---------------------------------------------------

    def _scenario_event(self, t: int, ev: ScenarioEvent) -> None:
        if ev.kind is EventKind.CLIENT_REQUEST:
            self._client_request(t, ev.path)
        elif ev.kind is EventKind.CRASH_NODE:
            self._crash(t, ev.args[0])
        elif ev.kind is EventKind.RECOVER_NODE:
            self._recover(t, ev.args[0])
        elif ev.kind is EventKind.PARTITION_LINK:
            self._log(t, "scenario", "partition", f"{ev.args[0]} {ev.args[1]}")
            self.partitions.add(frozenset(ev.args))
        elif ev.kind is EventKind.HEAL_LINK:
            self._log(t, "scenario", "heal", f"{ev.args[0]} {ev.args[1]}")
            self.partitions.discard(frozenset(ev.args))
        elif ev.kind is EventKind.END_SCENARIO:
            self._log(t, "scenario", "end")
            self._stopped = True

    def _crash(self, t: int, name: str) -> None:
        node = self.directors.get(name) or self.webs[name]
        if not node.alive:
            return
        self._log(t, "scenario", "crash", name)
        node.alive = False
        node.epoch += 1
        if name in self.directors and name in self.vip_holders:
            self.vip_holders.remove(name)
            self._log(t, "vip", "drop", name)
        self._pending_crashes.append(t)

    def _recover(self, t: int, name: str) -> None:
        node = self.directors.get(name) or self.webs[name]
        if node.alive:
            return
        self._log(t, "scenario", "recover", name)
        node.alive = True
        node.epoch += 1
        if name in self.directors:
            self._boot_director(self.directors[name], now=t)

    # -- failover ----------------------------------------------------------

    def _tick(self, t: int, d: _DirectorNode, epoch: int) -> None:
        if not d.alive or d.epoch != epoch:
            return
        inbox = [failover.decode(datagram) for datagram in d.inbox]
        d.inbox = []
        before = d.role.state
        _, actions = failover.tick(d.role, t, inbox, self.failover_cfg)
        if d.role.state is not before:
            self._log(t, f"failover/{d.name}", "state", f"{before.name.lower()}->{d.role.state.name.lower()}")
        for action in actions:
            if isinstance(action, failover.SendHeartbeat):
                peer = next(n for n in self.directors.values() if n.name != d.name)
                if peer.alive and self._link_ok(d.name, peer.name):
                    peer.inbox.append(failover.encode(action.message))
            elif isinstance(action, failover.AcquireVip):
                if d.name in self.vip_holders:
                    self.vip_holders.remove(d.name)
                self.vip_holders.append(d.name)
                self._log(t, "vip", "acquire", d.name)
            elif isinstance(action, failover.ReleaseVip):
                if d.name in self.vip_holders:
                    self.vip_holders.remove(d.name)
                self._log(t, "vip", "release", d.name)
        self._push(t + self.interval_ms, self._tick, d, epoch)

    # -- health ------------------------------------------------------------

    def _probe_launch(self, t: int, d: _DirectorNode, epoch: int, backend_id: str,
                      interval_ms: int, timeout_ms: int) -> None:
        if not d.alive or d.epoch != epoch:
            return
        web = self.webs[backend_id]
        if web.alive and self._link_ok(d.name, web.name):
            self._log(t, f"health/{d.name}", "probe", f"{backend_id} result=ok")
            self._probe_apply(t, d, epoch, backend_id, ProbeResult.success())
        else:
            # silence: the failure is only known once the timeout elapses
            self._push(t + timeout_ms, self._probe_timeout, d, epoch, backend_id)
        self._push(t + interval_ms, self._probe_launch, d, epoch, backend_id, interval_ms, timeout_ms)

    def _probe_timeout(self, t: int, d: _DirectorNode, epoch: int, backend_id: str) -> None:
        if not d.alive or d.epoch != epoch:
            return
        self._log(t, f"health/{d.name}", "probe", f"{backend_id} result=timeout")
        self._probe_apply(t, d, epoch, backend_id, ProbeResult.failure(FailureReason.TIMEOUT))

    def _probe_apply(self, t: int, d: _DirectorNode, epoch: int, backend_id: str,
                     result: ProbeResult) -> None:
        transition = d.monitor.apply(backend_id, result, t)
        if transition is Transition.WENT_DOWN:
            self._log(t, f"health/{d.name}", "mark", f"{backend_id} down")
        elif transition is Transition.CAME_UP:
            self._log(t, f"health/{d.name}", "mark", f"{backend_id} up")

    # -- client traffic ------------------------------------------------------

    def _client_request(self, t: int, path: str) -> None:
        self.metrics.requests += 1
        self._request_no += 1
        tag = f"request#{self._request_no}"

        if not self.vip_holders:
            self._refuse(t, tag, path, "no-vip")
            return
        d = self.directors[self.vip_holders[-1]]
        d.director.expire(t)
        client = f"203.0.113.1:{self._rng.randrange(1024, 65536)}"
        try:
            backend_id = d.director.admit(self.service_key, client, t)
        except NoBackendAvailable:
            self._refuse(t, tag, path, "no-backend", via=d.name)
            return
        web = self.webs[backend_id]
        if web.alive and self._link_ok(d.name, web.name):
            content = self.store.read(path)
            d.director.release(self.service_key, client, t)
            self.metrics.per_server_served[backend_id] += 1
            digest = hashlib.sha256(content).hexdigest()[:8]
            self._log(
                t, "client", tag,
                f"client={client} path={path} result=served via={d.name} "
                f"backend={backend_id} bytes={len(content)} sha={digest}",
            )
            if self._pending_crashes:
                gap = t - min(self._pending_crashes)
                self.metrics.failover_latency_ms = max(self.metrics.failover_latency_ms, gap)
                self._pending_crashes.clear()
            if self._episode_start is not None:
                self.metrics.downtime_ms += t - self._episode_start
                self._episode_start = None
        else:
            d.director.release(self.service_key, client, t)
            self._refuse(t, tag, path, "backend-unreachable", via=d.name, backend=backend_id)

    def _refuse(self, t: int, tag: str, path: str, reason: str,
                via: str = "-", backend: str = "-") -> None:
        self.metrics.refused += 1
        self._log(
            t, "client", tag,
            f"path={path} result=refused reason={reason} via={via} backend={backend}",
        )
        if self._episode_start is None:
            self._episode_start = t


def run_scenario(
    config: ClusterConfig,
    events: List[ScenarioEvent],
    seed: int = 0,
    store: Optional[SharedStore] = None,
) -> Tuple[SimMetrics, List[str]]:
    """One-shot convenience wrapper around ClusterSim.run."""
    return ClusterSim(config, store=store).run(events, seed=seed)
