"""Real-server pool, scheduler state, and the select operation."""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from . import kernels as _default_kernels


class SchedulerKind(Enum):
    RR = "rr"
    WRR = "wrr"
    LC = "lc"
    WLC = "wlc"

    @classmethod
    def parse(cls, name: str) -> "SchedulerKind":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown scheduler {name!r} (expected rr, wrr, lc or wlc)") from None


@dataclass
class RealServer:
    """One backend as the director sees it.

    ``weight`` 0 means quiesced: the server stays in the pool but is never
    selected.  Counters must never go negative; the decrement helpers
    guard that.
    """

    id: str
    address: str
    weight: int = 1
    active_conns: int = 0
    inactive_conns: int = 0
    alive: bool = True

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"server {self.id}: weight must be >= 0")

    @property
    def eligible(self) -> bool:
        return self.alive and self.weight > 0

    def dec_active(self) -> None:
        if self.active_conns <= 0:
            raise ValueError(f"server {self.id}: active_conns would go negative")
        self.active_conns -= 1

    def dec_inactive(self) -> None:
        if self.inactive_conns <= 0:
            raise ValueError(f"server {self.id}: inactive_conns would go negative")
        self.inactive_conns -= 1


@dataclass
class SchedulerState:
    """Mutable rotation state owned by one virtual service.

    ``cursor`` is the RR/WRR pool position of the last selection, -1 when
    fresh; ``current_weight`` is the WRR interleaving threshold.  Both
    reset whenever pool membership changes.
    """

    kind: SchedulerKind
    cursor: int = -1
    current_weight: int = 0

    def note_pool_change(self) -> None:
        self.cursor = -1
        self.current_weight = 0


def note_pool_change(state: SchedulerState) -> SchedulerState:
    """Reset rotation state; call on server add/remove/alive flip."""
    state.note_pool_change()
    return state


def select(
    state: SchedulerState,
    pool: Sequence[RealServer],
    kernels=None,
) -> Optional[str]:
    """Pick the next backend id per ``state.kind``, mutating ``state``.

    Only alive servers with weight > 0 are considered.  Returns None when
    no server is eligible.  ``kernels`` overrides the module-selected
    kernel backend (used by tests and benchmarks).
    """
    k = kernels if kernels is not None else _default_kernels
    n = len(pool)
    eligible = array("b", bytes(n))
    any_eligible = False
    for i, rs in enumerate(pool):
        if rs.alive and rs.weight > 0:
            eligible[i] = 1
            any_eligible = True
    if not any_eligible:
        return None

    kind = state.kind
    if kind is SchedulerKind.RR:
        idx, state.cursor = k.rr_pick(eligible, state.cursor)
    elif kind is SchedulerKind.WRR:
        weights = array("q", (rs.weight for rs in pool))
        idx, state.cursor, state.current_weight = k.wrr_pick(
            weights, eligible, state.cursor, state.current_weight
        )
    elif kind is SchedulerKind.LC:
        actives = array("q", (rs.active_conns for rs in pool))
        inactives = array("q", (rs.inactive_conns for rs in pool))
        idx = k.lc_pick(actives, inactives, eligible)
    else:
        actives = array("q", (rs.active_conns for rs in pool))
        inactives = array("q", (rs.inactive_conns for rs in pool))
        weights = array("q", (rs.weight for rs in pool))
        idx = k.wlc_pick(actives, inactives, weights, eligible)

    if idx < 0:
        return None
    return pool[idx].id
