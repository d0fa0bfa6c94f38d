"""Config grammar: parsing, validation paths, canonical round-trip."""

import random

import pytest

from havld.config import (
    ClusterConfig,
    ConfigFileError,
    HeartbeatSpec,
    NodeSpec,
    ServerSpec,
    ServiceSpec,
    parse,
    serialize,
)
from havld.health import ProbeKind, ProbeSpec
from havld.scheduling import SchedulerKind

from conftest import ORANGE_CONF


def errors_of(text, **kw):
    with pytest.raises(ConfigFileError) as exc:
        parse(text, **kw)
    return exc.value.errors


def test_reference_topology_parses():
    cfg = parse(ORANGE_CONF)
    assert cfg.primary_node == NodeSpec("lbnode1.orange.com", "192.168.1.2", 200)
    assert cfg.backup_node == NodeSpec("lbnode2.orange.com", "192.168.1.3", 100)
    assert cfg.heartbeat == HeartbeatSpec(interval_s=1.0, dead_factor=3, port=539, preempt=True)
    (svc,) = cfg.services
    assert (svc.name, svc.vip, svc.port) == ("www.orange.com", "192.168.1.150", 80)
    assert svc.scheduler is SchedulerKind.RR
    assert [s.name for s in svc.servers] == ["websrv1.orange.com", "websrv2.orange.com"]
    assert [s.address for s in svc.servers] == ["192.168.1.100:80", "192.168.1.101:80"]
    assert all(s.weight == 1 for s in svc.servers)


def test_unknown_scheduler_reported_with_path():
    text = ORANGE_CONF.replace("scheduler = rr", "scheduler = foo")
    errs = errors_of(text)
    assert any(e.path == "services[0].scheduler" for e in errs)


MINIMAL_NODES = """
node primary {
  name = a
  address = 1.1.1.1
}
node backup {
  name = b
  address = 1.1.1.2
}
"""


def test_zero_servers_is_an_error():
    text = MINIMAL_NODES + "virtual v {\n  address = 10.0.0.1:80\n}\n"
    errs = errors_of(text)
    assert any(e.path == "services[0].servers" for e in errs)


def test_zero_services_strict_vs_lenient():
    errs = errors_of(MINIMAL_NODES)
    assert any(e.path == "services" for e in errs)
    cfg = parse(MINIMAL_NODES, require_service=False)
    assert cfg.services == ()


def test_unknown_key_is_an_error():
    text = ORANGE_CONF.replace("weight = 1", "wait = 1", 1)
    errs = errors_of(text)
    assert any(e.path == "services[0].servers[0].wait" and "unknown" in e.message for e in errs)


def test_all_errors_collected_not_fail_fast():
    text = """
node primary {
  name = a
  address = 1.1.1.1
  priority = 9999
}
node backup {
  name = b
  address = 1.1.1.2
}
virtual v {
  address = nocolon
  scheduler = bogus
  server s1 {
  }
}
"""
    errs = errors_of(text)
    paths = {e.path for e in errs}
    assert "primary_node.priority" in paths
    assert "services[0].address" in paths
    assert "services[0].scheduler" in paths
    assert "services[0].servers[0].address" in paths
    assert len(errs) >= 4


def test_priority_rule_with_preemption():
    text = ORANGE_CONF.replace("priority = 200", "priority = 50")
    errs = errors_of(text)
    assert any(e.path == "primary_node.priority" for e in errs)
    # allowed once preemption is off
    relaxed = text.replace("port = 539", "port = 539\n  preempt = off")
    cfg = parse(relaxed)
    assert cfg.primary_node.priority == 50
    assert cfg.heartbeat.preempt is False


def test_duplicate_service_address_rejected():
    dup = ORANGE_CONF + """
virtual copycat {
  address = 192.168.1.150:80
  server x { address = 10.0.0.9:80 }
}
"""
    errs = errors_of(dup)
    assert any("duplicate virtual address" in e.message for e in errs)


def test_duplicate_server_name_rejected():
    text = ORANGE_CONF.replace("websrv2.orange.com", "websrv1.orange.com")
    errs = errors_of(text)
    assert any("duplicate server name" in e.message for e in errs)


def test_probe_timeout_must_undercut_interval():
    text = MINIMAL_NODES + """
virtual v {
  address = 10.0.0.1:80
  probe {
    interval_s = 2
    timeout_s = 2
  }
  server s1 {
    address = 10.0.0.2:80
  }
}
"""
    errs = errors_of(text)
    assert any(e.path == "services[0].probe.timeout_s" for e in errs)


def test_malformed_lines_report_line_numbers():
    errs = errors_of("not a config\n}\n")
    assert any(e.line == 1 and "expected" in e.message for e in errs)
    assert any(e.line == 2 and "unmatched" in e.message for e in errs)


def test_roundtrip_reference_topology():
    cfg = parse(ORANGE_CONF)
    assert parse(serialize(cfg)) == cfg


def test_serialize_omits_defaults_and_parse_refills_them():
    cfg = parse(ORANGE_CONF)
    text = serialize(cfg)
    # everything in the reference config is at its default
    assert "heartbeat" not in text
    assert "probe" not in text
    assert "weight" not in text
    assert "priority" not in text
    assert parse(text) == cfg


def test_serialize_is_deterministic():
    cfg = parse(ORANGE_CONF)
    assert serialize(cfg) == serialize(cfg)


# -- generated round-trip ---------------------------------------------------


def random_config(rng: random.Random) -> ClusterConfig:
    def name(prefix):
        return f"{prefix}{rng.randrange(1000)}.example{rng.randrange(10)}.com"

    preempt = rng.random() < 0.8
    prio_primary = rng.randrange(1, 256)
    prio_backup = rng.randrange(0, prio_primary) if preempt else rng.randrange(0, 256)
    services = []
    seen = set()
    for i in range(rng.randint(1, 4)):
        vip = f"10.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}"
        port = rng.randrange(1, 65536)
        if (vip, port) in seen:
            continue
        seen.add((vip, port))
        interval = rng.choice([0.5, 1.0, 2.0, 3.5])
        probe = ProbeSpec(
            kind=rng.choice(list(ProbeKind)),
            path=rng.choice(["/", "/health", "/x/y"]),
            expect_status=rng.choice([200, 204, 301]),
            interval=interval,
            timeout=interval / 2,
            fall=rng.randint(1, 5),
            rise=rng.randint(1, 5),
        )
        servers = tuple(
            ServerSpec(
                name=f"web{j}-{rng.randrange(100)}",
                address=f"10.1.1.{j + 1}:{rng.randrange(1, 65536)}",
                weight=rng.randint(0, 64),
            )
            for j in range(rng.randint(1, 5))
        )
        services.append(
            ServiceSpec(
                name=name("svc"),
                vip=vip,
                port=port,
                scheduler=rng.choice(list(SchedulerKind)),
                forward_label=rng.choice(["Route", "Masq"]),
                inactive_ttl_s=rng.choice([15.0, 5.0, 60.0]),
                probe=probe,
                servers=servers,
            )
        )
    return ClusterConfig(
        primary_node=NodeSpec(name("lb"), f"192.168.0.{rng.randrange(1, 255)}", prio_primary),
        backup_node=NodeSpec(name("lb"), f"192.168.0.{rng.randrange(1, 255)}", prio_backup),
        heartbeat=HeartbeatSpec(
            interval_s=rng.choice([0.5, 1.0, 2.0]),
            dead_factor=rng.randint(1, 5),
            port=rng.randrange(1, 65536),
            preempt=preempt,
        ),
        services=tuple(services),
    )


def test_generated_configs_roundtrip():
    rng = random.Random(2024)
    for _ in range(200):
        cfg = random_config(rng)
        assert parse(serialize(cfg)) == cfg
