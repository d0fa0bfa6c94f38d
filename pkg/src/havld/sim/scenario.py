"""Scenario files: timestamped cluster events, one per line.

Format: ``<time_ms> <event> [args...]``.  Events:

    <t> request [path]        client request for a document (default /)
    <t> crash <node>          node stops (director or web server)
    <t> recover <node>        node boots again with fresh state
    <t> partition <a> <b>     drop all traffic between two nodes
    <t> heal <a> <b>          restore the link
    <t> end                   stop the simulation

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple


class EventKind(Enum):
    CLIENT_REQUEST = "request"
    CRASH_NODE = "crash"
    RECOVER_NODE = "recover"
    PARTITION_LINK = "partition"
    HEAL_LINK = "heal"
    END_SCENARIO = "end"


_ARG_COUNT = {
    EventKind.CLIENT_REQUEST: (0, 1),
    EventKind.CRASH_NODE: (1, 1),
    EventKind.RECOVER_NODE: (1, 1),
    EventKind.PARTITION_LINK: (2, 2),
    EventKind.HEAL_LINK: (2, 2),
    EventKind.END_SCENARIO: (0, 0),
}


@dataclass(frozen=True)
class ScenarioEvent:
    at_ms: int
    kind: EventKind
    args: Tuple[str, ...] = ()

    @property
    def path(self) -> str:
        return self.args[0] if self.args else "/"


class ScenarioParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def load_scenario(text: str) -> List[ScenarioEvent]:
    """Parse scenario text; raises ScenarioParseError with the line number."""
    events: List[ScenarioEvent] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            at = int(parts[0])
        except ValueError:
            raise ScenarioParseError(lineno, f"expected a millisecond timestamp, got {parts[0]!r}") from None
        if at < 0:
            raise ScenarioParseError(lineno, f"negative timestamp {at}")
        if len(parts) < 2:
            raise ScenarioParseError(lineno, "missing event name")
        try:
            kind = EventKind(parts[1])
        except ValueError:
            raise ScenarioParseError(lineno, f"unknown event {parts[1]!r}") from None
        args = tuple(parts[2:])
        lo, hi = _ARG_COUNT[kind]
        if not lo <= len(args) <= hi:
            raise ScenarioParseError(
                lineno, f"{kind.value} takes {lo}" + (f"-{hi}" if hi != lo else "") + f" argument(s), got {len(args)}"
            )
        events.append(ScenarioEvent(at_ms=at, kind=kind, args=args))
    return events


def requests_every(
    start_ms: int, end_ms: int, per_second: int, path: str = "/"
) -> List[ScenarioEvent]:
    """Evenly spaced request events on the integer grid k*1000//per_second."""
    events = []
    k = 0
    while True:
        t = start_ms + k * 1000 // per_second
        if t >= end_ms:
            break
        events.append(ScenarioEvent(at_ms=t, kind=EventKind.CLIENT_REQUEST, args=(path,)))
        k += 1
    return events
