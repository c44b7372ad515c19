"""Benchmark the compiled resampling kernel against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 2000] [--k 24] [--b 2000] [--p 8]

Prints wall time per backend on identical inputs, the speedup, and the
maximum absolute difference of the returned statistics (expected 0.0: both
backends perform the same floating-point operations).
"""

import argparse
import time

import numpy as np

from outcomewide._kernels import _fallback

try:
    from outcomewide._kernels import _resample

    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False


def make_problem(n, p, k, b, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.integers(0, 2, n).astype(float),
                         rng.normal(size=(n, p - 2))])
    Y = rng.normal(size=(n, k)) + 0.15 * X[:, [1]]
    xtx_inv = np.linalg.inv(X.T @ X)
    pinv = xtx_inv @ X.T
    beta = pinv @ Y
    fitted = X @ beta
    resid = Y - fitted
    idx = rng.integers(0, n, size=(b, n), dtype=np.int64)
    return X, pinv, float(xtx_inv[1, 1]), n - p, fitted, resid, idx


def bench(fn, args, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args, 1)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--p", type=int, default=8)
    ap.add_argument("--k", type=int, default=24)
    ap.add_argument("--b", type=int, default=2000)
    opts = ap.parse_args()

    args = make_problem(opts.n, opts.p, opts.k, opts.b)
    print(f"problem: n={opts.n} p={opts.p} outcomes={opts.k} resamples={opts.b}")

    t_py, (b_py, s_py) = bench(_fallback.linear_bootstrap_stats, args)
    print(f"python fallback : {t_py * 1e3:9.2f} ms")

    if not HAVE_EXT:
        print("compiled kernel : not built (pip install -e . rebuilds it)")
        return

    t_cy, (b_cy, s_cy) = bench(_resample.linear_bootstrap_stats, args)
    print(f"compiled kernel : {t_cy * 1e3:9.2f} ms")
    print(f"speedup         : {t_py / t_cy:9.2f}x")
    diff = max(np.max(np.abs(b_py - b_cy)), np.max(np.abs(s_py - s_cy)))
    print(f"max |difference|: {diff:.3e}")


if __name__ == "__main__":
    main()
