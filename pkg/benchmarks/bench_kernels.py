"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 3]

Compilation happens in a warm-up call that is not timed.
"""

import argparse
import time

import numpy as np

from embscene import _kernels
from embscene.config import ExperimentConfig
from embscene.demogen import INF, pose_graph
from embscene.gridscene import generate_scene


def fw_inputs(size):
    cfg = ExperimentConfig().scene.gen_config("living_room")
    cfg = type(cfg)(cfg.room_type, size, size, cfg.min_objects, cfg.max_objects, cfg.max_footprint)
    poses, edges = pose_graph(generate_scene(cfg, 3))
    n = len(poses)
    dist = np.full((n, n), INF, dtype=np.int32)
    nxt = np.full((n, n), -1, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    nxt[np.arange(n), np.arange(n)] = np.arange(n)
    us, vs = np.array(list(edges)).T
    dist[us, vs] = 1
    nxt[us, vs] = vs
    return f"floyd_warshall n={n}", (dist, nxt)


def timed(fn, args, repeat):
    fn(*[a.copy() for a in args])  # warm-up / jit compile
    best = np.inf
    for _ in range(repeat):
        fresh = [a.copy() for a in args]
        t = time.perf_counter()
        fn(*fresh)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = [
        ("floyd_warshall",) + fw_inputs(8),
        ("floyd_warshall",) + fw_inputs(12),
        ("hungarian_min_cost", "hungarian 6x6 x200", None),
        ("hungarian_min_cost", "hungarian 60x60", (rng.random((60, 60)),)),
        ("lcs", "lcs 400x400", (rng.integers(0, 20, 400), rng.integers(0, 20, 400))),
    ]
    small = [rng.random((6, 6)) for _ in range(200)]
    print(f"numba available: {_kernels.HAS_NUMBA}")
    print(f"{'case':28s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, label, inputs in cases:
        fast, slow = _kernels.ACCELERATED[name], _kernels.FALLBACKS[name]
        if inputs is None:
            def many(f):
                return lambda: [f(m) for m in small]
            tf, ts = timed(many(fast), (), args.repeat), timed(many(slow), (), args.repeat)
        else:
            tf, ts = timed(fast, inputs, args.repeat), timed(slow, inputs, args.repeat)
        print(f"{label:28s} {tf:10.4f} {ts:10.4f} {ts / tf:8.1f}x")


if __name__ == "__main__":
    main()
