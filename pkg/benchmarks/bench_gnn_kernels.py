"""Time the numpy and numba GNN kernels on the same minibatch.

    python3 benchmarks/bench_gnn_kernels.py [--batch 128] [--n 8] [--m 4] [--repeat 20]
"""

import argparse
import time

import numpy as np

from beamselect.gnn import kernels
from beamselect.gnn.features import V_A, V_E, V_U
from beamselect.gnn.model import init_params


def _batch(rng, b, n, m):
    return rng.normal(size=(b, n, V_A)), rng.normal(size=(b, m, V_U)), rng.normal(size=(b, n, m, V_E))


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile for numba)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--m", type=int, default=4)
    ap.add_argument("--embed", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    mats = init_params(args.embed, seed=1).mats()
    xa, xu, xe = _batch(rng, args.batch, args.n, args.m)
    y = rng.integers(0, 2, args.batch).astype(float)
    w = rng.uniform(0.1, 1.0, args.batch)

    backends = ["numpy"] + (["numba"] if kernels.numba_available() else [])
    ref = None
    print(f"batch={args.batch} N={args.n} M={args.m} E={args.embed}")
    print(f"{'backend':<8} {'forward ms':>11} {'loss+grad ms':>13}")
    for be in backends:
        tf = _time(lambda: kernels.logits(mats, xa, xu, xe, be), args.repeat)
        tg = _time(lambda: kernels.loss_grad(mats, xa, xu, xe, y, w, be), args.repeat)
        z = kernels.logits(mats, xa, xu, xe, be)
        if ref is None:
            ref = z
        drift = float(np.max(np.abs(z - ref)))
        print(f"{be:<8} {1e3 * tf:>11.3f} {1e3 * tg:>13.3f}   max|dz| vs numpy = {drift:.1e}")
    if len(backends) == 1:
        print("numba not installed; only the numpy path was timed")


if __name__ == "__main__":
    main()
