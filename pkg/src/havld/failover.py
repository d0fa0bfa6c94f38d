"""Two-node heartbeat failover: wire codec and role state machine.

Both directors advertise their state every tick (the heartbeat daemons
run on both nodes and monitor each other).  The backup takes over the
virtual IP when the active peer falls silent; when preemption is on the
configured primary reclaims the VIP from a lower-priority holder, and
the handover is ordered so the old holder releases before the new one
acquires.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import List, Optional, Tuple, Union

HEARTBEAT_MAGIC = b"HAHB"
HEARTBEAT_VERSION = 1
HEARTBEAT_LEN = 24
_WIRE = struct.Struct(">4sBBBBQQ")  # magic, version, state, priority, reserved, node_id, sequence

DEFAULT_HEARTBEAT_PORT = 539


class NodeState(IntEnum):
    INIT = 0
    BACKUP = 1
    ACTIVE = 2
    FAULT = 3


class MalformedReason(Enum):
    BAD_LENGTH = "bad-length"
    BAD_MAGIC = "bad-magic"
    BAD_VERSION = "bad-version"
    BAD_STATE = "bad-state"
    BAD_RESERVED = "bad-reserved"


class MalformedHeartbeat(ValueError):
    def __init__(self, reason: MalformedReason, detail: str = ""):
        super().__init__(f"{reason.value}{': ' + detail if detail else ''}")
        self.reason = reason


@dataclass(frozen=True)
class HeartbeatMessage:
    state: NodeState
    priority: int  # 0-255
    node_id: int  # 64-bit unsigned
    sequence: int  # 64-bit unsigned, strictly increasing per sender per run


def encode(msg: HeartbeatMessage) -> bytes:
    """Fixed 24-byte big-endian layout; raises ValueError on out-of-range fields."""
    if not 0 <= msg.priority <= 255:
        raise ValueError(f"priority out of range: {msg.priority}")
    return _WIRE.pack(
        HEARTBEAT_MAGIC,
        HEARTBEAT_VERSION,
        int(msg.state),
        msg.priority,
        0,
        msg.node_id,
        msg.sequence,
    )


def decode(data: bytes) -> HeartbeatMessage:
    """Inverse of encode; rejects any non-conforming datagram.

    Checks length, then magic, then version, then the remaining field
    invariants, so fuzzed inputs always map to a specific reason.
    """
    if len(data) != HEARTBEAT_LEN:
        raise MalformedHeartbeat(MalformedReason.BAD_LENGTH, f"{len(data)} bytes")
    magic, version, state, priority, reserved, node_id, sequence = _WIRE.unpack(data)
    if magic != HEARTBEAT_MAGIC:
        raise MalformedHeartbeat(MalformedReason.BAD_MAGIC, repr(magic))
    if version != HEARTBEAT_VERSION:
        raise MalformedHeartbeat(MalformedReason.BAD_VERSION, str(version))
    if state > 3:
        raise MalformedHeartbeat(MalformedReason.BAD_STATE, str(state))
    if reserved != 0:
        raise MalformedHeartbeat(MalformedReason.BAD_RESERVED, str(reserved))
    return HeartbeatMessage(
        state=NodeState(state), priority=priority, node_id=node_id, sequence=sequence
    )


# -- tick actions --------------------------------------------------------


@dataclass(frozen=True)
class SendHeartbeat:
    message: HeartbeatMessage


@dataclass(frozen=True)
class AcquireVip:
    pass


@dataclass(frozen=True)
class ReleaseVip:
    pass


Action = Union[SendHeartbeat, AcquireVip, ReleaseVip]


@dataclass(frozen=True)
class FailoverConfig:
    interval: float = 1.0
    dead_factor: int = 3
    preempt: bool = True

    @property
    def dead_time(self) -> float:
        return self.interval * self.dead_factor


@dataclass
class NodeRole:
    """One director's view of the failover pair.

    ``configured_primary`` marks the node that should hold the VIP in
    steady state.  ``vip_held`` always mirrors ``state == ACTIVE``; the
    caller reports acquisition failures via ``mark_vip_failed``.
    """

    node_id: int
    priority: int
    configured_primary: bool
    started_at: float
    state: NodeState = NodeState.INIT
    vip_held: bool = False
    sequence: int = 0
    state_entered_at: float = field(init=False)
    peer_last_seen: Optional[float] = None
    peer_last_active_seen: Optional[float] = None
    peer_state: Optional[NodeState] = None
    peer_priority: int = 0
    peer_node_id: int = 0

    def __post_init__(self):
        self.state_entered_at = self.started_at

    def claim(self) -> Tuple[int, int]:
        return (self.priority, self.node_id)

    def peer_claim(self) -> Tuple[int, int]:
        return (self.peer_priority, self.peer_node_id)

    def mark_vip_failed(self, now: float) -> None:
        """Local VIP acquisition failed: drop to FAULT and retry later."""
        self.state = NodeState.FAULT
        self.vip_held = False
        self.state_entered_at = now


def tick(
    role: NodeRole,
    now: float,
    inbox: List[HeartbeatMessage],
    cfg: FailoverConfig,
) -> Tuple[NodeRole, List[Action]]:
    """One heartbeat period: fold peer messages, transition, emit actions.

    Pure with respect to the outside world: VIP changes and the outgoing
    heartbeat are returned as actions for the caller to execute, in list
    order.  Called every ``cfg.interval``.
    """
    actions: List[Action] = []
    heard_active = False
    heard_other = False  # a peer message in a non-ACTIVE state this tick
    for msg in inbox:
        if msg.node_id == role.node_id:
            continue  # own datagram looped back
        role.peer_last_seen = now
        role.peer_state = msg.state
        role.peer_priority = msg.priority
        role.peer_node_id = msg.node_id
        if msg.state is NodeState.ACTIVE:
            role.peer_last_active_seen = now
            heard_active = True
        else:
            heard_other = True

    def enter(state: NodeState) -> None:
        role.state = state
        role.state_entered_at = now

    def promote() -> None:
        enter(NodeState.ACTIVE)
        role.vip_held = True
        actions.append(AcquireVip())

    def demote() -> None:
        if role.vip_held:
            actions.append(ReleaseVip())
            role.vip_held = False
        enter(NodeState.BACKUP)

    peer_outranks = role.peer_claim() > role.claim()

    if role.state is NodeState.INIT:
        if heard_active and not (cfg.preempt and role.configured_primary and not peer_outranks):
            # an established holder we won't (or can't) preempt
            enter(NodeState.BACKUP)
        elif role.configured_primary and heard_other and not heard_active:
            # peer is up but not claiming the VIP; no dual-active risk
            promote()
        elif now - role.state_entered_at >= cfg.dead_time:
            if role.configured_primary:
                promote()
            else:
                enter(NodeState.BACKUP)
    elif role.state is NodeState.BACKUP:
        last_active = role.peer_last_active_seen
        reference = max(role.state_entered_at, last_active) if last_active is not None else role.state_entered_at
        if now - reference >= cfg.dead_time:
            promote()
    elif role.state is NodeState.ACTIVE:
        if heard_active and peer_outranks:
            # split-brain: the lower claim yields
            demote()
        elif cfg.preempt and heard_other and peer_outranks and role.peer_state is NodeState.INIT:
            # the rightful primary is back; release before it acquires
            demote()
    elif role.state is NodeState.FAULT:
        if now - role.state_entered_at >= cfg.dead_time:
            recent_active = (
                role.peer_last_active_seen is not None
                and now - role.peer_last_active_seen < cfg.dead_time
            )
            if recent_active:
                enter(NodeState.BACKUP)
            else:
                promote()  # retry acquisition

    role.sequence += 1
    actions.append(
        SendHeartbeat(
            HeartbeatMessage(
                state=role.state,
                priority=role.priority,
                node_id=role.node_id,
                sequence=role.sequence,
            )
        )
    )
    return role, actions
