"""Time the numpy and numba kernels side by side.

    python benchmarks/bench_kernels.py [--repeat 20]

Numba timings exclude the first (compiling) call.
"""
import argparse
import time

import numpy as np

from dsnmf import _kernels


def _time(fn, args, repeat):
    fn(*args)  # warm-up / JIT compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    k, n = 50, 2000
    H = rng.uniform(size=(k, n))
    B = rng.standard_normal((k, n))
    G = rng.uniform(size=(k, n))
    Gn = rng.uniform(size=(k, n))
    zeros = np.zeros((k, n))
    yield "mu_update 50x2000", "mu_update", (H, B, G, Gn, zeros, zeros, 0.5)
    X = rng.standard_normal((20, 600))
    yield "pairwise_sqdist 20x600", "pairwise_sqdist", (X,)
    pts = rng.standard_normal((5000, 20))
    ctr = rng.standard_normal((10, 20))
    yield "assign 5000x20 k=10", "assign", (pts, ctr)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _kernels.numba_kernels is None:
        print("numba not installed; nothing to compare")
        return
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':26s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  max|diff|")
    for label, name, a in cases(rng):
        f_np = getattr(_kernels.numpy_kernels, name)
        f_nb = getattr(_kernels.numba_kernels, name)
        t_np = _time(f_np, a, args.repeat)
        t_nb = _time(f_nb, a, args.repeat)
        r_np, r_nb = f_np(*a), f_nb(*a)
        if isinstance(r_np, tuple):
            diff = max(float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float)))) for x, y in zip(r_np, r_nb))
        else:
            diff = float(np.max(np.abs(r_np - r_nb)))
        print(f"{label:26s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.2f}  {diff:.2e}")


if __name__ == "__main__":
    main()
