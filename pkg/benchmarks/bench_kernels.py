#!/usr/bin/env python3
"""Benchmark the hot kernels: compiled backend vs the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Times the pairwise cross-validation sums and the batched log-density
evaluation at a few problem sizes under SPBN_BACKEND=numba and
SPBN_BACKEND=numpy, and prints the speedup. The two backends must agree
numerically (asserted here to 1e-9 relative).
"""

import argparse
import os
import time

import numpy as np
from scipy.linalg import solve_triangular

from spbn import kernels


def linv_of(h):
    lower = np.linalg.cholesky(h)
    return solve_triangular(lower, np.eye(h.shape[0]), lower=True)


def time_call(fn, repeat):
    best = float("inf")
    value = None
    for _ in range(repeat):
        start = time.perf_counter()
        value = fn()
        best = min(best, time.perf_counter() - start)
    return best, value


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    kernels.warm_up()

    cases = []
    for n, d in ((500, 1), (2000, 2), (2000, 3), (5000, 3)):
        x = rng.standard_normal((n, d))
        a = rng.standard_normal((d, d))
        linv = linv_of(a @ a.T + d * np.eye(d))
        cases.append((f"ucv_pair_sums  n={n:<5} d={d}", lambda x=x, l=linv: kernels.ucv_pair_sums(x, l)))

    train = rng.standard_normal((4000, 3))
    queries = rng.standard_normal((1000, 3))
    linv3 = linv_of(np.diag([0.4, 0.6, 0.9]))
    cases.append(
        (
            "logdens_cross  n=4000 m=1000 d=3",
            lambda: tuple(kernels.logdens_cross(queries, train, linv3, -1.0)[:4]),
        )
    )

    header = f"{'kernel':<34} {'numba (s)':>10} {'numpy (s)':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, fn in cases:
        results = {}
        timings = {}
        for backend in ("numba", "numpy"):
            os.environ[kernels.BACKEND_ENV] = backend
            timings[backend], results[backend] = time_call(fn, args.repeat)
        os.environ.pop(kernels.BACKEND_ENV, None)
        np.testing.assert_allclose(
            np.asarray(results["numba"], dtype=float),
            np.asarray(results["numpy"], dtype=float),
            rtol=1e-9,
        )
        speedup = timings["numpy"] / timings["numba"]
        print(
            f"{label:<34} {timings['numba']:>10.4f} {timings['numpy']:>10.4f} "
            f"{speedup:>7.1f}x"
        )


if __name__ == "__main__":
    main()
