"""Heartbeat codec and the failover state machine."""

import random

import pytest

from havld.failover import (
    AcquireVip,
    FailoverConfig,
    HEARTBEAT_LEN,
    HeartbeatMessage,
    MalformedHeartbeat,
    MalformedReason,
    NodeRole,
    NodeState,
    ReleaseVip,
    SendHeartbeat,
    decode,
    encode,
    tick,
)

CFG = FailoverConfig(interval=1.0, dead_factor=3)


# -- codec -------------------------------------------------------------------


def test_encode_decode_roundtrip_random_messages():
    rng = random.Random(3)
    for _ in range(500):
        msg = HeartbeatMessage(
            state=NodeState(rng.randrange(4)),
            priority=rng.randrange(256),
            node_id=rng.getrandbits(64),
            sequence=rng.getrandbits(64),
        )
        data = encode(msg)
        assert len(data) == HEARTBEAT_LEN
        assert decode(data) == msg


def test_decode_rejects_wrong_length():
    with pytest.raises(MalformedHeartbeat) as exc:
        decode(b"\x00" * 23)
    assert exc.value.reason is MalformedReason.BAD_LENGTH


def test_decode_rejects_wrong_magic():
    data = b"XXXX" + encode(HeartbeatMessage(NodeState.ACTIVE, 1, 2, 3))[4:]
    with pytest.raises(MalformedHeartbeat) as exc:
        decode(data)
    assert exc.value.reason is MalformedReason.BAD_MAGIC


def test_decode_rejects_wrong_version():
    good = bytearray(encode(HeartbeatMessage(NodeState.ACTIVE, 1, 2, 3)))
    good[4] = 9
    with pytest.raises(MalformedHeartbeat) as exc:
        decode(bytes(good))
    assert exc.value.reason is MalformedReason.BAD_VERSION


def test_decode_rejects_bad_state_and_reserved():
    good = bytearray(encode(HeartbeatMessage(NodeState.ACTIVE, 1, 2, 3)))
    bad_state = good.copy()
    bad_state[5] = 7
    with pytest.raises(MalformedHeartbeat) as exc:
        decode(bytes(bad_state))
    assert exc.value.reason is MalformedReason.BAD_STATE
    bad_reserved = good.copy()
    bad_reserved[7] = 1
    with pytest.raises(MalformedHeartbeat) as exc:
        decode(bytes(bad_reserved))
    assert exc.value.reason is MalformedReason.BAD_RESERVED


def test_decode_total_on_fuzz():
    rng = random.Random(1234)
    for _ in range(5000):
        blob = rng.randbytes(rng.randrange(0, 65))
        try:
            decode(blob)
        except MalformedHeartbeat:
            pass


# -- state machine helpers ------------------------------------------------------


def hb(state, priority, node_id=1, sequence=1):
    return HeartbeatMessage(state=state, priority=priority, node_id=node_id, sequence=sequence)


def vip_actions(actions):
    return [a for a in actions if isinstance(a, (AcquireVip, ReleaseVip))]


def primary_role(now=0.0, state=NodeState.INIT):
    return NodeRole(
        node_id=1, priority=200, configured_primary=True, started_at=now,
        state=state, vip_held=state is NodeState.ACTIVE,
    )


def backup_role(now=0.0, state=NodeState.BACKUP):
    return NodeRole(
        node_id=2, priority=100, configured_primary=False, started_at=now,
        state=state, vip_held=state is NodeState.ACTIVE,
    )


# -- state machine -----------------------------------------------------------


def test_backup_promotes_after_dead_time_of_silence():
    role = backup_role(now=0.0)
    role.peer_last_active_seen = 0.0
    for t in (1.0, 2.0):
        _, actions = tick(role, t, [], CFG)
        assert role.state is NodeState.BACKUP
        assert vip_actions(actions) == []
    _, actions = tick(role, 3.0, [], CFG)
    assert role.state is NodeState.ACTIVE
    assert role.vip_held
    assert vip_actions(actions) == [AcquireVip()]


def test_backup_hearing_active_heartbeats_stays_put():
    role = backup_role(now=0.0)
    for t in range(1, 20):
        _, actions = tick(role, float(t), [hb(NodeState.ACTIVE, 200)], CFG)
        assert role.state is NodeState.BACKUP
        assert vip_actions(actions) == []
        # steady state still advertises its own liveness
        assert any(isinstance(a, SendHeartbeat) for a in actions)


def test_active_yields_to_higher_priority_active_peer():
    role = backup_role(state=NodeState.ACTIVE)
    _, actions = tick(role, 1.0, [hb(NodeState.ACTIVE, 200, node_id=1)], CFG)
    assert role.state is NodeState.BACKUP
    assert not role.vip_held
    assert vip_actions(actions) == [ReleaseVip()]


def test_active_keeps_vip_against_lower_priority_active_peer():
    role = primary_role(state=NodeState.ACTIVE)
    _, actions = tick(role, 1.0, [hb(NodeState.ACTIVE, 100, node_id=2)], CFG)
    assert role.state is NodeState.ACTIVE
    assert vip_actions(actions) == []


def test_equal_priority_tie_breaks_on_node_id():
    a = NodeRole(node_id=1, priority=150, configured_primary=True, started_at=0.0,
                 state=NodeState.ACTIVE, vip_held=True)
    b = NodeRole(node_id=2, priority=150, configured_primary=False, started_at=0.0,
                 state=NodeState.ACTIVE, vip_held=True)
    _, actions_a = tick(a, 1.0, [hb(NodeState.ACTIVE, 150, node_id=2)], CFG)
    _, actions_b = tick(b, 1.0, [hb(NodeState.ACTIVE, 150, node_id=1)], CFG)
    # higher node_id wins the tie: node 1 yields, node 2 stays
    assert a.state is NodeState.BACKUP and vip_actions(actions_a) == [ReleaseVip()]
    assert b.state is NodeState.ACTIVE and vip_actions(actions_b) == []


def test_cold_start_primary_claims_backup_defers():
    primary, backup = primary_role(), backup_role(state=NodeState.INIT)
    # first exchange: both still init
    _, pa = tick(primary, 0.0, [], CFG)
    _, ba = tick(backup, 0.0, [m.message for m in pa if isinstance(m, SendHeartbeat)], CFG)
    assert primary.state is NodeState.INIT and backup.state is NodeState.INIT
    # primary hears a neutral peer and claims; backup hears active and defers
    _, pa = tick(primary, 1.0, [m.message for m in ba if isinstance(m, SendHeartbeat)], CFG)
    assert primary.state is NodeState.ACTIVE
    _, ba = tick(backup, 1.0, [m.message for m in pa if isinstance(m, SendHeartbeat)], CFG)
    assert backup.state is NodeState.BACKUP


def test_lone_primary_exits_init_after_dead_time():
    role = primary_role(now=0.0)
    for t in (0.0, 1.0, 2.0):
        tick(role, t, [], CFG)
        assert role.state is NodeState.INIT
    _, actions = tick(role, 3.0, [], CFG)
    assert role.state is NodeState.ACTIVE
    assert vip_actions(actions) == [AcquireVip()]


def test_lone_backup_exits_init_then_promotes():
    role = backup_role(state=NodeState.INIT)
    tick(role, 3.0, [], CFG)
    assert role.state is NodeState.BACKUP
    tick(role, 5.9, [], CFG)
    assert role.state is NodeState.BACKUP
    tick(role, 6.0, [], CFG)
    assert role.state is NodeState.ACTIVE


def test_preemption_dance_releases_before_acquire():
    """Returning primary reclaims; old holder releases strictly first."""
    primary = primary_role(now=10.0)  # rebooted at t=10
    backup = backup_role(state=NodeState.ACTIVE)
    log = []
    inbox_p, inbox_b = [], []
    for t in (10.0, 10.5, 11.0, 11.5, 12.0, 12.5):
        role, inbox = (primary, inbox_p) if t == int(t) else (backup, inbox_b)
        # primary ticks on whole seconds, backup on halves
        _, actions = tick(role, t, inbox, CFG)
        inbox.clear()
        for action in actions:
            if isinstance(action, SendHeartbeat):
                (inbox_b if role is primary else inbox_p).append(action.message)
            else:
                log.append((t, role.node_id, type(action).__name__))
    assert (10.5, 2, "ReleaseVip") in log
    assert (11.0, 1, "AcquireVip") in log
    assert log.index((10.5, 2, "ReleaseVip")) < log.index((11.0, 1, "AcquireVip"))
    assert primary.state is NodeState.ACTIVE and backup.state is NodeState.BACKUP


def test_preemption_off_restarting_primary_stays_backup():
    cfg = FailoverConfig(interval=1.0, dead_factor=3, preempt=False)
    primary = primary_role(now=10.0)
    _, _ = tick(primary, 10.0, [hb(NodeState.ACTIVE, 100, node_id=2)], cfg)
    assert primary.state is NodeState.BACKUP
    # and it keeps deferring while the holder heartbeats
    for t in (11.0, 12.0, 13.0, 14.0):
        tick(primary, t, [hb(NodeState.ACTIVE, 100, node_id=2)], cfg)
    assert primary.state is NodeState.BACKUP


def test_fault_retries_after_dead_time():
    role = primary_role(state=NodeState.ACTIVE)
    role.mark_vip_failed(5.0)
    assert role.state is NodeState.FAULT and not role.vip_held
    tick(role, 7.9, [], CFG)
    assert role.state is NodeState.FAULT
    _, actions = tick(role, 8.0, [], CFG)
    assert role.state is NodeState.ACTIVE
    assert vip_actions(actions) == [AcquireVip()]


def test_fault_defers_to_active_peer():
    role = primary_role(state=NodeState.ACTIVE)
    role.mark_vip_failed(5.0)
    tick(role, 7.0, [hb(NodeState.ACTIVE, 100, node_id=2)], CFG)
    _, actions = tick(role, 8.0, [hb(NodeState.ACTIVE, 100, node_id=2)], CFG)
    assert role.state is NodeState.BACKUP
    assert vip_actions(actions) == []


def test_every_tick_sends_one_heartbeat_with_monotonic_sequence():
    role = backup_role()
    seqs = []
    for t in range(1, 30):
        _, actions = tick(role, float(t), [hb(NodeState.ACTIVE, 200)], CFG)
        beats = [a for a in actions if isinstance(a, SendHeartbeat)]
        assert len(beats) == 1
        assert beats[0].message.state is role.state
        seqs.append(beats[0].message.sequence)
    assert seqs == sorted(set(seqs))


def test_vip_held_mirrors_active_state():
    role = backup_role()
    role.peer_last_active_seen = 0.0
    for t in range(1, 10):
        tick(role, float(t), [], CFG)
        assert role.vip_held == (role.state is NodeState.ACTIVE)
