#!/usr/bin/env python3
"""Benchmark the scheduling kernels: compiled extension vs pure Python.

Two views: the raw kernels on prebuilt counter arrays (the compiled
core's real advantage) and the full ``select`` path, which rebuilds the
arrays from the pool on every call and therefore dilutes the gap.  Run
after installing the package:

    python benchmarks/bench_select.py --servers 8 --rounds 200000
"""

import argparse
import time
from array import array

from havld.scheduling import (
    RealServer,
    SchedulerKind,
    SchedulerState,
    available_backends,
    select,
)


def bench_select(kind: SchedulerKind, pool, rounds: int, kernels) -> float:
    state = SchedulerState(kind)
    start = time.perf_counter()
    for _ in range(rounds):
        select(state, pool, kernels=kernels)
    return time.perf_counter() - start


def bench_kernel(kind: SchedulerKind, arrays, rounds: int, kernels) -> float:
    weights, actives, inactives, eligible = arrays
    start = time.perf_counter()
    if kind is SchedulerKind.RR:
        cursor = -1
        for _ in range(rounds):
            _, cursor = kernels.rr_pick(eligible, cursor)
    elif kind is SchedulerKind.WRR:
        cursor, cw = -1, 0
        for _ in range(rounds):
            _, cursor, cw = kernels.wrr_pick(weights, eligible, cursor, cw)
    elif kind is SchedulerKind.LC:
        for _ in range(rounds):
            kernels.lc_pick(actives, inactives, eligible)
    else:
        for _ in range(rounds):
            kernels.wlc_pick(actives, inactives, weights, eligible)
    return time.perf_counter() - start


def report(title: str, runner, backends, rounds: int) -> None:
    print(f"\n{title}")
    header = f"{'scheduler':<10}" + "".join(f"{name:>16}" for name in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for kind in SchedulerKind:
        times = {name: runner(kind, kernels) for name, kernels in backends.items()}
        row = f"{kind.value:<10}"
        for name in backends:
            row += f"{rounds / times[name]:>13.0f}/s"
        if "compiled" in times and "pure" in times:
            row += f"{times['pure'] / times['compiled']:>9.2f}x"
        print(row)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--servers", type=int, default=8)
    parser.add_argument("--rounds", type=int, default=200_000)
    args = parser.parse_args()

    pool = [
        RealServer(f"srv{i}", f"10.0.0.{i}:80", weight=(i % 4) + 1,
                   active_conns=i * 3, inactive_conns=i * 7)
        for i in range(args.servers)
    ]
    arrays = (
        array("q", (rs.weight for rs in pool)),
        array("q", (rs.active_conns for rs in pool)),
        array("q", (rs.inactive_conns for rs in pool)),
        array("b", [1] * len(pool)),
    )
    backends = available_backends()
    print(f"pool={args.servers} servers, {args.rounds} selections per cell, backends: {', '.join(backends)}")
    report(
        "raw kernels (prebuilt arrays)",
        lambda kind, k: bench_kernel(kind, arrays, args.rounds, k),
        backends,
        args.rounds,
    )
    report(
        "full select() (arrays rebuilt per call)",
        lambda kind, k: bench_select(kind, pool, args.rounds, k),
        backends,
        args.rounds,
    )


if __name__ == "__main__":
    main()
