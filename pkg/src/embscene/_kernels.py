"""Hot numeric kernels.

Each kernel has a loop form compiled with ``numba.njit`` and a pure-numpy
fallback. Set ``EMBSCENE_NO_NUMBA=1`` to force the fallback (also used when
numba is not importable). Both paths return identical results; the test suite
runs both.
"""

from __future__ import annotations

import os

import numpy as np

INF_STEPS = np.int32(1 << 29)

_DISABLE = os.environ.get("EMBSCENE_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLE:
        raise ImportError("numba disabled by EMBSCENE_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# ---------------------------------------------------------------- Floyd-Warshall


def _floyd_warshall_loops(dist, nxt):
    n = dist.shape[0]
    for k in range(n):
        for i in range(n):
            dik = dist[i, k]
            if dik >= INF_STEPS:
                continue
            nik = nxt[i, k]
            for j in range(n):
                cand = dik + dist[k, j]
                if cand < dist[i, j]:
                    dist[i, j] = cand
                    nxt[i, j] = nik
    return dist, nxt


def _floyd_warshall_numpy(dist, nxt):
    n = dist.shape[0]
    for k in range(n):
        cand = dist[:, k : k + 1] + dist[k : k + 1, :]
        better = cand < dist
        if better.any():
            rows, cols = np.nonzero(better)
            dist[rows, cols] = cand[rows, cols]
            nxt[rows, cols] = nxt[rows, k]
    return dist, nxt


# --------------------------------------------------------------------- Hungarian


def _hungarian_loops(cost):
    # Shortest augmenting path with potentials on a square cost matrix,
    # minimisation. Row/column arrays are 1-based; index 0 is the virtual root.
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _hungarian_numpy(cost):
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    padded = np.zeros((n + 1, n + 1))
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = padded[i0] - u[i0] - v
            upd = free & (cur < minv)
            minv[upd] = cur[upd]
            way[upd] = j0
            masked = np.where(free, minv, np.inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row


# --------------------------------------------------------------------------- LCS


def _lcs_loops(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        cur[0] = 0
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        prev, cur = cur, prev
    return prev[m]


def _lcs_numpy(a, b):
    m = b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    for tok in a:
        hit = np.concatenate(([0], (b == tok).astype(np.int64)))
        # diagonal candidates; the left-to-right max is a running maximum
        diag = np.where(hit[1:] == 1, prev[:-1] + 1, prev[1:])
        cur = np.maximum.accumulate(np.concatenate(([0], diag)))
        prev = cur
    return prev[m]


if HAS_NUMBA:
    floyd_warshall = njit(cache=True)(_floyd_warshall_loops)
    hungarian_min_cost = njit(cache=True)(_hungarian_loops)
    lcs = njit(cache=True)(_lcs_loops)
else:
    floyd_warshall = _floyd_warshall_numpy
    hungarian_min_cost = _hungarian_numpy
    lcs = _lcs_numpy

FALLBACKS = {
    "floyd_warshall": _floyd_warshall_numpy,
    "hungarian_min_cost": _hungarian_numpy,
    "lcs": _lcs_numpy,
}
ACCELERATED = {
    "floyd_warshall": floyd_warshall,
    "hungarian_min_cost": hungarian_min_cost,
    "lcs": lcs,
}
