"""Pure-Python scheduling kernels.

Fallback twin of the compiled core in ``_core.pyx``; both expose the same
four functions over parallel arrays and must stay behaviourally identical
(the test suite runs every kernel test against both backends).

All kernels take parallel sequences indexed by pool position:
``weights``/``actives``/``inactives`` are non-negative ints, ``eligible``
is 1 for servers that may be selected (alive and weight > 0) and 0
otherwise.  They return the selected pool index, -1 when no server is
eligible.
"""

from __future__ import annotations

from math import gcd


def rr_pick(eligible, cursor):
    """Round robin: next eligible index after ``cursor``, cyclically.

    Returns ``(index, new_cursor)``; the cursor is left unchanged when
    nothing is eligible.
    """
    n = len(eligible)
    if n == 0:
        return -1, cursor
    for step in range(1, n + 1):
        idx = (cursor + step) % n
        if eligible[idx]:
            return idx, idx
    return -1, cursor


def wrr_pick(weights, eligible, cursor, current_weight):
    """Interleaved weighted round robin.

    Walks the pool cyclically; each time the walk wraps past index 0 the
    current-weight threshold drops by gcd(eligible weights), resetting to
    the maximum eligible weight when exhausted.  A server is picked when
    its weight reaches the threshold.  Returns
    ``(index, new_cursor, new_current_weight)``.
    """
    n = len(weights)
    if n == 0:
        return -1, cursor, current_weight
    g = 0
    maxw = 0
    for i in range(n):
        if eligible[i]:
            g = gcd(g, weights[i])
            if weights[i] > maxw:
                maxw = weights[i]
    if maxw <= 0:
        return -1, cursor, current_weight
    # The threshold meets every eligible weight within maxw//g wraps, so
    # this bound is never reached; it only guards against a broken pool.
    for _ in range(n * (maxw // g + 2)):
        cursor = (cursor + 1) % n
        if cursor == 0:
            current_weight -= g
            if current_weight <= 0:
                current_weight = maxw
        if eligible[cursor] and weights[cursor] >= current_weight:
            return cursor, cursor, current_weight
    return -1, cursor, current_weight


def lc_pick(actives, inactives, eligible):
    """Least connections: argmin of 256*active + inactive, lowest index wins ties."""
    best = -1
    best_oh = 0
    for i in range(len(actives)):
        if not eligible[i]:
            continue
        oh = 256 * actives[i] + inactives[i]
        if best < 0 or oh < best_oh:
            best = i
            best_oh = oh
    return best


def wlc_pick(actives, inactives, weights, eligible):
    """Weighted least connections: argmin of overhead/weight.

    Compared as overhead_i * weight_j < overhead_j * weight_i to stay in
    integers; lowest index wins ties.
    """
    best = -1
    best_oh = 0
    for i in range(len(actives)):
        if not eligible[i]:
            continue
        oh = 256 * actives[i] + inactives[i]
        if best < 0 or oh * weights[best] < best_oh * weights[i]:
            best = i
            best_oh = oh
    return best
