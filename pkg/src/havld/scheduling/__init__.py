"""Scheduler pool and kernel backend selection.

The four selection kernels exist twice: a compiled extension
(``_core``, built from ``_core.pyx``) and a pure-Python fallback
(``_pure``).  Import picks the compiled one when present; set
``HAVLD_PURE_SCHED=1`` to force the fallback.
"""

import os

from . import _pure

if os.environ.get("HAVLD_PURE_SCHED"):
    kernels = _pure
    KERNEL_BACKEND = "pure"
else:
    try:
        from . import _core as kernels  # type: ignore[no-redef]

        KERNEL_BACKEND = "compiled"
    except ImportError:
        kernels = _pure
        KERNEL_BACKEND = "pure"


def available_backends():
    """Name -> kernel module for every backend importable here."""
    out = {"pure": _pure}
    try:
        from . import _core

        out["compiled"] = _core
    except ImportError:
        pass
    return out


from .pool import (  # noqa: E402
    RealServer,
    SchedulerKind,
    SchedulerState,
    note_pool_change,
    select,
)

__all__ = [
    "KERNEL_BACKEND",
    "RealServer",
    "SchedulerKind",
    "SchedulerState",
    "available_backends",
    "kernels",
    "note_pool_change",
    "select",
]
