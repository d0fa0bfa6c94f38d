"""Deterministic cluster simulator: scenario format and event engine."""

from .engine import ClusterSim, InvalidTopology, SharedStore, SimMetrics, run_scenario
from .scenario import (
    EventKind,
    ScenarioEvent,
    ScenarioParseError,
    load_scenario,
    requests_every,
)

__all__ = [
    "ClusterSim",
    "EventKind",
    "InvalidTopology",
    "ScenarioEvent",
    "ScenarioParseError",
    "SharedStore",
    "SimMetrics",
    "load_scenario",
    "requests_every",
    "run_scenario",
]
