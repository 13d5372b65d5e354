"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--nodes 4096] [--steps 20000] [--repeat 3]

Reports the best-of-``repeat`` wall time for per-node local statistics
(every family) and for a Metropolis-Hastings run, plus the speedup.
"""

import argparse
import math
import time

import numpy as np

from gibbsmple import ModelSpec, SimConfig, Window, kernels
from gibbsmple.models import node_statistics
from gibbsmple.patterns import FINITE, INTERVAL
from gibbsmple.simulate import run_chain

MODELS = {
    "overlap_area": (ModelSpec.overlap_area(1.0), (-0.5, 1.0)),
    "multi_strauss": (ModelSpec.multi_strauss({"1,1": [0.0, 0.5, 1.0], "1,2": [0.0, 0.7], "2,2": [0.0, 1.0]}, M=2),
                      (-1.0, 0.5, 0.5, 0.3, -1.0, 0.4)),
    "knn_multi_strauss": (ModelSpec.knn_multi_strauss([0.0, 0.5, 1.0], k=3), (-0.5, 0.2, 0.2)),
    "strauss_disc": (ModelSpec.strauss_disc(0.5), (-0.5, 0.5)),
    "geyer_triplet": (ModelSpec.geyer_triplet(1.0), (-0.5, 0.2, 0.3)),
    "area_interaction": (ModelSpec.area_interaction(0.5), (0.5, -1.0)),
}


def best(fn, repeat):
    t = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        t = min(t, time.perf_counter() - t0)
    return t


def pattern_for(model, theta, side, seed):
    cfg = SimConfig(model, theta, Window(0, side, 0, side), steps=int(20 * side * side), burn_in=0, seed=seed)
    return run_chain(cfg)[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=4096)
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--side", type=float, default=15.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not kernels.compiled_available():
        raise SystemExit("compiled core not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    rows = []
    for name, (model, theta) in MODELS.items():
        phi = pattern_for(model, theta, args.side, 1)
        qx = rng.uniform(0, args.side, args.nodes)
        qy = rng.uniform(0, args.side, args.nodes)
        ms = model.mark_space
        if ms.kind == FINITE:
            qm = rng.integers(1, ms.M + 1, args.nodes).astype(float)
        elif ms.kind == INTERVAL:
            qm = rng.uniform(0, ms.mmax, args.nodes)
        else:
            qm = np.zeros(args.nodes)
        times = {}
        for b in ("python", "cython"):
            with kernels.use_backend(b):
                times[b] = best(lambda: node_statistics(model, phi, qx, qy, qm), args.repeat)
        rows.append((f"node_statistics {name} (n={len(phi)})", times))

        cfg = SimConfig(model, theta, Window(0, args.side, 0, args.side), steps=args.steps, burn_in=0, seed=2)
        times = {}
        for b in ("python", "cython"):
            with kernels.use_backend(b):
                times[b] = best(lambda: run_chain(cfg), args.repeat)
        rows.append((f"run_chain {name} ({args.steps} steps)", times))

    w = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{w}}  {'python s':>10}  {'cython s':>10}  {'speedup':>8}")
    for label, t in rows:
        print(f"{label:<{w}}  {t['python']:>10.4f}  {t['cython']:>10.5f}  {t['python'] / t['cython']:>7.1f}x")


if __name__ == "__main__":
    main()
