import itertools

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from embscene import _kernels

INF = _kernels.INF_STEPS


def random_graph(rng, n, p):
    dist = np.full((n, n), INF, dtype=np.int32)
    nxt = np.full((n, n), -1, dtype=np.int64)
    adj = rng.random((n, n)) < p
    dist[adj] = 1
    rows, cols = np.nonzero(adj)
    nxt[rows, cols] = cols
    np.fill_diagonal(dist, 0)
    nxt[np.arange(n), np.arange(n)] = np.arange(n)
    return dist, nxt


def test_floyd_warshall_paths_agree():
    rng = np.random.default_rng(1)
    for n, p in [(1, 0.5), (7, 0.2), (30, 0.08), (40, 0.3)]:
        dist, nxt = random_graph(rng, n, p)
        d1, n1 = _kernels.ACCELERATED["floyd_warshall"](dist.copy(), nxt.copy())
        d2, n2 = _kernels.FALLBACKS["floyd_warshall"](dist.copy(), nxt.copy())
        assert np.array_equal(d1, d2)
        assert np.array_equal(n1, n2)


def test_hungarian_paths_agree():
    rng = np.random.default_rng(2)
    for k in range(1, 9):
        cost = rng.random((k, k))
        a = _kernels.ACCELERATED["hungarian_min_cost"](cost)
        b = _kernels.FALLBACKS["hungarian_min_cost"](cost)
        assert np.isclose(cost[np.arange(k), a].sum(), cost[np.arange(k), b].sum(), atol=1e-12)
        assert sorted(a.tolist()) == list(range(k))


def test_hungarian_min_cost_against_permutations():
    rng = np.random.default_rng(3)
    for fn in (_kernels.ACCELERATED["hungarian_min_cost"], _kernels.FALLBACKS["hungarian_min_cost"]):
        for _ in range(40):
            k = int(rng.integers(1, 6))
            cost = rng.integers(0, 4, size=(k, k)).astype(float)
            cols = fn(cost)
            best = min(sum(cost[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k)))
            assert cost[np.arange(k), cols].sum() == best


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=25), st.lists(st.integers(0, 3), max_size=25))
def test_lcs_paths_agree(a, b):
    a = np.array(a, dtype=np.int64)
    b = np.array(b, dtype=np.int64)
    assert _kernels.ACCELERATED["lcs"](a, b) == _kernels.FALLBACKS["lcs"](a, b)
