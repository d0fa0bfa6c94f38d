# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scheduling kernels; behavioural twin of ``_pure.py``.

Selection runs once per admitted connection, which makes it the hot
inner loop of both the simulator and the live proxy.  Inputs are the
parallel arrays built by ``pool.select``: int64 counters/weights and an
int8 eligibility mask.
"""


cdef long long _gcd(long long a, long long b):
    while b:
        a, b = b, a % b
    return a


def rr_pick(const signed char[:] eligible, long long cursor):
    cdef Py_ssize_t n = eligible.shape[0]
    cdef Py_ssize_t step
    cdef long long idx
    if n == 0:
        return -1, cursor
    for step in range(1, n + 1):
        idx = (cursor + step) % n
        if eligible[idx]:
            return idx, idx
    return -1, cursor


def wrr_pick(const long long[:] weights, const signed char[:] eligible,
             long long cursor, long long current_weight):
    cdef Py_ssize_t n = weights.shape[0]
    cdef Py_ssize_t i
    cdef long long g = 0, maxw = 0, guard
    if n == 0:
        return -1, cursor, current_weight
    for i in range(n):
        if eligible[i]:
            g = _gcd(g, weights[i])
            if weights[i] > maxw:
                maxw = weights[i]
    if maxw <= 0:
        return -1, cursor, current_weight
    guard = n * (maxw // g + 2)
    while guard > 0:
        guard -= 1
        cursor = (cursor + 1) % n
        if cursor == 0:
            current_weight -= g
            if current_weight <= 0:
                current_weight = maxw
        if eligible[cursor] and weights[cursor] >= current_weight:
            return cursor, cursor, current_weight
    return -1, cursor, current_weight


def lc_pick(const long long[:] actives, const long long[:] inactives,
            const signed char[:] eligible):
    cdef Py_ssize_t n = actives.shape[0]
    cdef Py_ssize_t i
    cdef long long best = -1, best_oh = 0, oh
    for i in range(n):
        if not eligible[i]:
            continue
        oh = 256 * actives[i] + inactives[i]
        if best < 0 or oh < best_oh:
            best = i
            best_oh = oh
    return best


def wlc_pick(const long long[:] actives, const long long[:] inactives,
             const long long[:] weights, const signed char[:] eligible):
    cdef Py_ssize_t n = actives.shape[0]
    cdef Py_ssize_t i
    cdef long long best = -1, best_oh = 0, oh
    for i in range(n):
        if not eligible[i]:
            continue
        oh = 256 * actives[i] + inactives[i]
        if best < 0 or oh * weights[best] < best_oh * weights[i]:
            best = i
            best_oh = oh
    return best
