#!/usr/bin/env python3
"""Benchmark the compiled top-k kernel against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--k 30] [--dim 64] [--repeats 3]
"""

import argparse
import time

import numpy as np

from lemon import kernels
from lemon.geometry import normalize_rows


def time_backend(backend, metric, ref, q, k, repeats):
    excl = np.full(q.shape[0], -1, dtype=np.int64)
    if metric == "cosine":
        ref_in, q_in = normalize_rows(ref), normalize_rows(q)
        fn = backend.topk_cosine
    else:
        ref_in, q_in = ref, q
        fn = backend.topk_euclidean
    fn(ref_in, q_in[:8], k, excl[:8])  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(ref_in, q_in, k, excl)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=int, default=30)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    backends = {"python": kernels.get_backend("python")}
    try:
        backends["cython"] = kernels.get_backend("cython")
    except ImportError:
        print("compiled kernel not built; benchmarking the fallback only")

    rng = np.random.default_rng(0)
    print(f"k={args.k} dim={args.dim} (best of {args.repeats})")
    header = f"{'n_ref':>8} {'n_query':>8} {'metric':>10}" + "".join(
        f" {name:>12}" for name in backends
    )
    print(header)
    for n_ref, n_q in ((2_000, 500), (8_000, 1_000), (32_000, 2_000)):
        ref = rng.standard_normal((n_ref, args.dim))
        q = rng.standard_normal((n_q, args.dim))
        for metric in ("cosine", "euclidean"):
            cells = []
            for backend in backends.values():
                secs = time_backend(backend, metric, ref, q, args.k, args.repeats)
                cells.append(f"{secs * 1e3:>10.1f}ms")
            print(f"{n_ref:>8} {n_q:>8} {metric:>10}" + " ".join(f" {c}" for c in cells))


if __name__ == "__main__":
    main()
