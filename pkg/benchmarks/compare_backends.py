#!/usr/bin/env python3
"""Benchmark the compiled training kernel against the pure-numpy fallback.

Times the full Adam training loop at the labeled-set sizes the loop
actually visits, checks both backends agree on the trained parameters,
and reports thread-scaling (the compiled kernel trains without the GIL).

Usage: python benchmarks/compare_backends.py [--epochs N] [--repeats N]
"""

import argparse
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from albench import _mlp_py

try:
    from albench import _mlp
except ImportError:
    _mlp = None


def fresh_params(rng):
    return [
        rng.normal(size=(128, 17)) * 0.1,
        np.zeros(128),
        rng.normal(size=(128, 128)) * 0.1,
        np.zeros(128),
        rng.normal(size=(1, 128)) * 0.1,
        np.zeros(1),
    ]


def time_training(mod, X, y, epochs, repeats):
    n = X.shape[0]
    perms = np.vstack([np.random.default_rng(e).permutation(n) for e in range(epochs)]).astype(np.intp)
    best = float("inf")
    trained = None
    for _ in range(repeats):
        params = fresh_params(np.random.default_rng(0))
        t0 = time.perf_counter()
        mod.train_mlp(*params, X, y, perms, min(32, n), 1e-3, 0.9, 0.999, 1e-8)
        best = min(best, time.perf_counter() - t0)
        trained = params
    return best, trained


def thread_scaling(mod, X, y, epochs, workers):
    n = X.shape[0]
    perms = np.vstack([np.random.default_rng(e).permutation(n) for e in range(epochs)]).astype(np.intp)

    def one(seed):
        params = fresh_params(np.random.default_rng(seed))
        mod.train_mlp(*params, X, y, perms, min(32, n), 1e-3, 0.9, 0.999, 1e-8)

    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(one, range(workers)))
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    if _mlp is None:
        print("compiled kernel not built (python setup.py build_ext --inplace); nothing to compare")
        return

    rng = np.random.default_rng(7)
    print(f"training benchmark: 17-128-128-1 net, {args.epochs} epochs, batch <= 32")
    print(f"{'n':>5}  {'numpy [s]':>10}  {'cython [s]':>10}  {'speedup':>8}  {'max param diff':>15}")
    for n in (30, 60, 105, 480):
        X = rng.normal(size=(n, 17))
        y = rng.normal(size=n)
        t_py, p_py = time_training(_mlp_py, X, y, args.epochs, args.repeats)
        t_cy, p_cy = time_training(_mlp, X, y, args.epochs, args.repeats)
        diff = max(np.abs(a - b).max() for a, b in zip(p_py, p_cy))
        print(f"{n:>5}  {t_py:>10.3f}  {t_cy:>10.3f}  {t_py / t_cy:>8.2f}  {diff:>15.2e}")

    X = rng.normal(size=(105, 17))
    y = rng.normal(size=105)
    print("\nthread scaling (4 concurrent trainings, n=105):")
    for name, mod in (("numpy", _mlp_py), ("cython", _mlp)):
        serial = 4 * time_training(mod, X, y, args.epochs, 1)[0]
        parallel = thread_scaling(mod, X, y, args.epochs, 4)
        print(f"  {name:>6}: serial {serial:.3f}s  4 threads {parallel:.3f}s  scaling x{serial / parallel:.2f}")


if __name__ == "__main__":
    main()
