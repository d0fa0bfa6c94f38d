"""Cluster configuration: a small block-structured text format.

One file describes the whole pair (both director nodes, heartbeat
timing, every virtual service with its probe and server pool) and is
meant to be copied verbatim between the two directors.  Example::

    node primary {
      name = lbnode1.orange.com
      address = 192.168.1.2
      priority = 200
    }
    node backup {
      name = lbnode2.orange.com
      address = 192.168.1.3
      priority = 100
    }
    heartbeat {
      interval_s = 1
      dead_factor = 3
      port = 539
    }
    virtual www.orange.com {
      address = 192.168.1.150:80
      scheduler = rr
      server websrv1.orange.com {
        address = 192.168.1.100:80
        weight = 1
      }
      server websrv2.orange.com {
        address = 192.168.1.101:80
      }
    }

Parsing collects every error (line number plus a field path into the
parsed model) instead of stopping at the first; a config object is only
returned when there are none.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .failover import DEFAULT_HEARTBEAT_PORT
from .health import ProbeKind, ProbeSpec
from .scheduling import SchedulerKind

DEFAULT_PRIMARY_PRIORITY = 200
DEFAULT_BACKUP_PRIORITY = 100
DEFAULT_INACTIVE_TTL_S = 15.0

_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class NodeSpec:
    name: str
    address: str
    priority: int


@dataclass(frozen=True)
class HeartbeatSpec:
    interval_s: float = 1.0
    dead_factor: int = 3
    port: int = DEFAULT_HEARTBEAT_PORT
    preempt: bool = True


@dataclass(frozen=True)
class ServerSpec:
    name: str
    address: str  # host:port
    weight: int = 1


@dataclass(frozen=True)
class ServiceSpec:
    name: str
    vip: str
    port: int
    scheduler: SchedulerKind = SchedulerKind.RR
    forward_label: str = "Route"
    inactive_ttl_s: float = DEFAULT_INACTIVE_TTL_S
    probe: ProbeSpec = field(default_factory=ProbeSpec)
    servers: Tuple[ServerSpec, ...] = ()


@dataclass(frozen=True)
class ClusterConfig:
    primary_node: NodeSpec
    backup_node: NodeSpec
    heartbeat: HeartbeatSpec = field(default_factory=HeartbeatSpec)
    services: Tuple[ServiceSpec, ...] = ()

    def node(self, which: str) -> NodeSpec:
        if which == "primary":
            return self.primary_node
        if which == "backup":
            return self.backup_node
        raise ValueError(f"unknown node role {which!r}")


@dataclass(frozen=True)
class ConfigError:
    line: int
    path: str
    message: str

    def __str__(self):
        return f"line {self.line}: {self.path}: {self.message}"


class ConfigFileError(Exception):
    """Raised when parsing finds any errors; carries the full list."""

    def __init__(self, errors: List[ConfigError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


# -- raw block tree -------------------------------------------------------


@dataclass
class _Block:
    kind: str
    arg: str
    line: int
    keys: Dict[str, Tuple[str, int]] = field(default_factory=dict)
    children: List["_Block"] = field(default_factory=list)


def _split_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _scan(text: str, errors: List[ConfigError]) -> List[_Block]:
    root = _Block("root", "", 0)
    stack = [root]
    for lineno, line in _split_lines(text):
        if line == "}":
            if len(stack) == 1:
                errors.append(ConfigError(lineno, "", "unmatched '}'"))
            else:
                stack.pop()
        elif line.endswith("{"):
            head = line[:-1].split()
            if not head:
                errors.append(ConfigError(lineno, "", "block needs a type before '{'"))
                head = ["?"]
            block = _Block(head[0], head[1] if len(head) > 1 else "", lineno)
            if len(head) > 2:
                errors.append(ConfigError(lineno, "", f"too many words before '{{': {line!r}"))
            stack[-1].children.append(block)
            stack.append(block)
        elif "=" in line:
            key, value = (part.strip() for part in line.split("=", 1))
            blk = stack[-1]
            if key in blk.keys:
                errors.append(ConfigError(lineno, "", f"duplicate key {key!r}"))
            blk.keys[key] = (value, lineno)
        else:
            errors.append(ConfigError(lineno, "", f"expected 'key = value', a block, or '}}': {line!r}"))
    if len(stack) > 1:
        errors.append(ConfigError(stack[-1].line, "", f"unclosed block {stack[-1].kind!r}"))
    return root.children


# -- typed field helpers ---------------------------------------------------


class _Fields:
    """Consumes a block's key/value pairs with typed accessors."""

    def __init__(self, block: _Block, path: str, errors: List[ConfigError]):
        self.block = block
        self.path = path
        self.errors = errors
        self.pending = dict(block.keys)

    def error(self, key: str, message: str, line: Optional[int] = None) -> None:
        if line is None:
            line = self.block.keys.get(key, ("", self.block.line))[1]
        self.errors.append(ConfigError(line, f"{self.path}.{key}" if key else self.path, message))

    def _take(self, key: str):
        return self.pending.pop(key, None)

    def string(self, key: str, default: Optional[str] = None, required: bool = False):
        item = self._take(key)
        if item is None:
            if required:
                self.errors.append(
                    ConfigError(self.block.line, f"{self.path}.{key}", "required key missing")
                )
            return default
        return item[0]

    def integer(self, key: str, default=None, lo=None, hi=None):
        item = self._take(key)
        if item is None:
            return default
        value, line = item
        try:
            n = int(value)
        except ValueError:
            self.error(key, f"expected an integer, got {value!r}", line)
            return default
        if (lo is not None and n < lo) or (hi is not None and n > hi):
            self.error(key, f"{n} out of range [{lo}, {hi}]", line)
            return default
        return n

    def number(self, key: str, default=None, positive=False):
        item = self._take(key)
        if item is None:
            return default
        value, line = item
        try:
            x = float(value)
        except ValueError:
            self.error(key, f"expected a number, got {value!r}", line)
            return default
        if positive and not x > 0:
            self.error(key, f"must be > 0, got {value}", line)
            return default
        return x

    def flag(self, key: str, default=None):
        item = self._take(key)
        if item is None:
            return default
        value, line = item
        low = value.lower()
        if low in ("on", "true", "yes"):
            return True
        if low in ("off", "false", "no"):
            return False
        self.error(key, f"expected on/off, got {value!r}", line)
        return default

    def endpoint(self, key: str, required: bool = False):
        """host:port pair; returns (host, port) or None."""
        item = self._take(key)
        if item is None:
            if required:
                self.errors.append(
                    ConfigError(self.block.line, f"{self.path}.{key}", "required key missing")
                )
            return None
        value, line = item
        host, sep, port = value.rpartition(":")
        if not sep or not host:
            self.error(key, f"expected host:port, got {value!r}", line)
            return None
        try:
            p = int(port)
        except ValueError:
            self.error(key, f"bad port in {value!r}", line)
            return None
        if not 1 <= p <= 65535:
            self.error(key, f"port {p} out of range 1-65535", line)
            return None
        return host, p

    def finish(self) -> None:
        for key, (_, line) in self.pending.items():
            self.errors.append(ConfigError(line, f"{self.path}.{key}", "unknown key"))


def _check_name(name: str, path: str, line: int, errors: List[ConfigError]) -> str:
    if not name:
        errors.append(ConfigError(line, path, "missing name"))
        return "?"
    if not _NAME_RE.match(name):
        errors.append(ConfigError(line, path, f"invalid name {name!r}"))
    return name


# -- parse -----------------------------------------------------------------


def parse(text: str, require_service: bool = True) -> ClusterConfig:
    """Parse and validate a cluster config; raises ConfigFileError.

    ``require_service=False`` relaxes only the at-least-one-service rule
    (used by read-only commands that render empty tables).
    """
    errors: List[ConfigError] = []
    blocks = _scan(text, errors)

    nodes: Dict[str, NodeSpec] = {}
    heartbeat = HeartbeatSpec()
    heartbeat_seen = False
    services: List[ServiceSpec] = []

    for block in blocks:
        if block.kind == "node":
            role = block.arg
            if role not in ("primary", "backup"):
                errors.append(ConfigError(block.line, "node", f"expected 'node primary' or 'node backup', got {role!r}"))
                continue
            path = f"{role}_node"
            if role in nodes:
                errors.append(ConfigError(block.line, path, "duplicate node block"))
                continue
            f = _Fields(block, path, errors)
            name = f.string("name", required=True) or "?"
            _check_name(name, f"{path}.name", block.line, errors)
            address = f.string("address", required=True) or "?"
            default_prio = DEFAULT_PRIMARY_PRIORITY if role == "primary" else DEFAULT_BACKUP_PRIORITY
            priority = f.integer("priority", default=default_prio, lo=0, hi=255)
            for child in block.children:
                errors.append(ConfigError(child.line, path, f"unexpected block {child.kind!r}"))
            f.finish()
            nodes[role] = NodeSpec(name=name, address=address, priority=priority)
        elif block.kind == "heartbeat":
            if heartbeat_seen:
                errors.append(ConfigError(block.line, "heartbeat", "duplicate heartbeat block"))
                continue
            heartbeat_seen = True
            f = _Fields(block, "heartbeat", errors)
            heartbeat = HeartbeatSpec(
                interval_s=f.number("interval_s", default=1.0, positive=True),
                dead_factor=f.integer("dead_factor", default=3, lo=1),
                port=f.integer("port", default=DEFAULT_HEARTBEAT_PORT, lo=1, hi=65535),
                preempt=f.flag("preempt", default=True),
            )
            for child in block.children:
                errors.append(ConfigError(child.line, "heartbeat", f"unexpected block {child.kind!r}"))
            f.finish()
        elif block.kind == "virtual":
            services.append(_parse_service(block, len(services), errors))
        else:
            errors.append(ConfigError(block.line, "", f"unknown block {block.kind!r}"))

    for role in ("primary", "backup"):
        if role not in nodes:
            errors.append(ConfigError(0, f"{role}_node", f"missing 'node {role}' block"))
            nodes[role] = NodeSpec(name=role, address="?", priority=0)

    if require_service and not services:
        errors.append(ConfigError(0, "services", "at least one virtual service is required"))

    seen_keys: Dict[Tuple[str, int], int] = {}
    for i, svc in enumerate(services):
        key = (svc.vip, svc.port)
        if key in seen_keys:
            errors.append(
                ConfigError(0, f"services[{i}]", f"duplicate virtual address {svc.vip}:{svc.port} (also services[{seen_keys[key]}])")
            )
        else:
            seen_keys[key] = i

    if heartbeat.preempt and nodes["primary"].priority <= nodes["backup"].priority:
        errors.append(
            ConfigError(
                0,
                "primary_node.priority",
                f"primary priority ({nodes['primary'].priority}) must exceed backup "
                f"priority ({nodes['backup'].priority}) while preemption is on",
            )
        )

    if errors:
        raise ConfigFileError(sorted(errors, key=lambda e: (e.line, e.path)))
    return ClusterConfig(
        primary_node=nodes["primary"],
        backup_node=nodes["backup"],
        heartbeat=heartbeat,
        services=tuple(services),
    )


def _parse_service(block: _Block, index: int, errors: List[ConfigError]) -> ServiceSpec:
    path = f"services[{index}]"
    name = _check_name(block.arg, path, block.line, errors)
    f = _Fields(block, path, errors)
    endpoint = f.endpoint("address", required=True) or ("?", 1)
    scheduler = SchedulerKind.RR
    sched_item = f._take("scheduler")
    if sched_item is not None:
        try:
            scheduler = SchedulerKind.parse(sched_item[0])
        except ValueError as exc:
            f.error("scheduler", str(exc), sched_item[1])
    forward = f.string("forward", default="route")
    if forward.lower() not in ("route", "masq"):
        f.error("forward", f"expected route or masq, got {forward!r}")
        forward = "route"
    ttl = f.number("inactive_ttl_s", default=DEFAULT_INACTIVE_TTL_S, positive=True)

    probe = ProbeSpec()
    servers: List[ServerSpec] = []
    probe_seen = False
    for child in block.children:
        if child.kind == "probe":
            if probe_seen:
                errors.append(ConfigError(child.line, f"{path}.probe", "duplicate probe block"))
                continue
            probe_seen = True
            probe = _parse_probe(child, path, errors)
        elif child.kind == "server":
            servers.append(_parse_server(child, path, len(servers), errors))
        else:
            errors.append(ConfigError(child.line, path, f"unexpected block {child.kind!r}"))
    f.finish()

    if not servers:
        errors.append(ConfigError(block.line, f"{path}.servers", "at least one server is required"))
    names = {}
    for j, s in enumerate(servers):
        if s.name in names:
            errors.append(
                ConfigError(block.line, f"{path}.servers[{j}]", f"duplicate server name {s.name!r}")
            )
        names[s.name] = j

    return ServiceSpec(
        name=name,
        vip=endpoint[0],
        port=endpoint[1],
        scheduler=scheduler,
        forward_label="Masq" if forward.lower() == "masq" else "Route",
        inactive_ttl_s=ttl,
        probe=probe,
        servers=tuple(servers),
    )


def _parse_probe(block: _Block, parent: str, errors: List[ConfigError]) -> ProbeSpec:
    path = f"{parent}.probe"
    f = _Fields(block, path, errors)
    kind = ProbeKind.TCP_CONNECT
    kind_item = f._take("kind")
    if kind_item is not None:
        try:
            kind = ProbeKind(kind_item[0].lower())
        except ValueError:
            f.error("kind", f"expected tcp or http, got {kind_item[0]!r}", kind_item[1])
    fields = dict(
        kind=kind,
        path=f.string("path", default="/"),
        expect_status=f.integer("expect_status", default=200, lo=100, hi=599),
        interval=f.number("interval_s", default=2.0, positive=True),
        timeout=f.number("timeout_s", default=1.0, positive=True),
        fall=f.integer("fall", default=3, lo=1),
        rise=f.integer("rise", default=2, lo=1),
    )
    for child in block.children:
        errors.append(ConfigError(child.line, path, f"unexpected block {child.kind!r}"))
    f.finish()
    if not fields["timeout"] < fields["interval"]:
        errors.append(
            ConfigError(block.line, f"{path}.timeout_s", "probe timeout must be smaller than the interval")
        )
        fields["timeout"] = fields["interval"] / 2
    return ProbeSpec(**fields)


def _parse_server(block: _Block, parent: str, index: int, errors: List[ConfigError]) -> ServerSpec:
    path = f"{parent}.servers[{index}]"
    name = _check_name(block.arg, path, block.line, errors)
    f = _Fields(block, path, errors)
    endpoint = f.endpoint("address", required=True) or ("?", 1)
    weight = f.integer("weight", default=1, lo=0)
    for child in block.children:
        errors.append(ConfigError(child.line, path, f"unexpected block {child.kind!r}"))
    f.finish()
    return ServerSpec(name=name, address=f"{endpoint[0]}:{endpoint[1]}", weight=weight)


# -- serialize ---------------------------------------------------------------


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def serialize(cfg: ClusterConfig) -> str:
    """Canonical text form: fixed ordering, defaults omitted.

    parse(serialize(cfg)) reconstructs an equal config.
    """
    out: List[str] = []

    def kv(indent: int, key: str, value) -> None:
        out.append("  " * indent + f"{key} = {value}")

    for role, node in (("primary", cfg.primary_node), ("backup", cfg.backup_node)):
        default_prio = DEFAULT_PRIMARY_PRIORITY if role == "primary" else DEFAULT_BACKUP_PRIORITY
        out.append(f"node {role} {{")
        kv(1, "name", node.name)
        kv(1, "address", node.address)
        if node.priority != default_prio:
            kv(1, "priority", node.priority)
        out.append("}")

    hb = cfg.heartbeat
    hb_lines = []
    if hb.interval_s != 1.0:
        hb_lines.append(("interval_s", _num(hb.interval_s)))
    if hb.dead_factor != 3:
        hb_lines.append(("dead_factor", hb.dead_factor))
    if hb.port != DEFAULT_HEARTBEAT_PORT:
        hb_lines.append(("port", hb.port))
    if not hb.preempt:
        hb_lines.append(("preempt", "off"))
    if hb_lines:
        out.append("heartbeat {")
        for key, value in hb_lines:
            kv(1, key, value)
        out.append("}")

    default_probe = ProbeSpec()
    for svc in cfg.services:
        out.append(f"virtual {svc.name} {{")
        kv(1, "address", f"{svc.vip}:{svc.port}")
        if svc.scheduler is not SchedulerKind.RR:
            kv(1, "scheduler", svc.scheduler.value)
        if svc.forward_label != "Route":
            kv(1, "forward", svc.forward_label.lower())
        if svc.inactive_ttl_s != DEFAULT_INACTIVE_TTL_S:
            kv(1, "inactive_ttl_s", _num(svc.inactive_ttl_s))
        if svc.probe != default_probe:
            out.append("  probe {")
            p = svc.probe
            if p.kind is not ProbeKind.TCP_CONNECT:
                kv(2, "kind", p.kind.value)
            if p.path != "/":
                kv(2, "path", p.path)
            if p.expect_status != 200:
                kv(2, "expect_status", p.expect_status)
            if p.interval != 2.0:
                kv(2, "interval_s", _num(p.interval))
            if p.timeout != 1.0:
                kv(2, "timeout_s", _num(p.timeout))
            if p.fall != 3:
                kv(2, "fall", p.fall)
            if p.rise != 2:
                kv(2, "rise", p.rise)
            out.append("  }")
        for server in svc.servers:
            out.append(f"  server {server.name} {{")
            kv(2, "address", server.address)
            if server.weight != 1:
                kv(2, "weight", server.weight)
            out.append("  }")
        out.append("}")
    return "\n".join(out) + "\n"


def load(path: str, require_service: bool = True) -> ClusterConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read(), require_service=require_service)
