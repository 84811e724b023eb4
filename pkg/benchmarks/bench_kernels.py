#!/usr/bin/env python3
"""Benchmark the compiled quantizer kernels against the numpy fallback.

Times the smooth forward pass and the fused backward pass over a grid of
kernel lengths and branch counts, reporting per-call time and speedup.

    python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from dbq import _kernels_np
from dbq.quantizer import branch_coefficients, quant_levels, sign_matrix

try:
    from dbq import _kernels
except ImportError:
    _kernels = None


def make_instance(rng, D, B):
    alphas = np.array([1.5 ** (B - j) for j in range(1, B + 1)])
    levels = quant_levels(alphas)
    thresholds = (levels[:-1] + levels[1:]) / 2
    b = branch_coefficients(sign_matrix(B))
    w = rng.normal(0, 1.5, D)
    upstream = rng.normal(0, 1.0, D)
    s = b.astype(float) @ alphas
    return w, upstream, thresholds, b, alphas, s


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if _kernels is None:
        print("compiled kernels not available; nothing to compare")
        return

    rng = np.random.default_rng(0)
    print(f"{'case':<18} {'numpy':>12} {'cython':>12} {'speedup':>9}")
    for D in (64, 512, 4096, 32768):
        for B in (1, 2, 3):
            w, up, t, b, a, s = make_instance(rng, D, B)
            asum = float(a.sum())

            fwd_np = best_of(lambda: _kernels_np.forward_train(
                w, t, s, asum, 1.0, 1.0, 25.0), args.repeats)
            fwd_cy = best_of(lambda: _kernels.forward_train(
                w, t, s, asum, 1.0, 1.0, 25.0), args.repeats)
            print(f"fwd  D={D:<6} B={B} {fwd_np * 1e6:>10.1f}us "
                  f"{fwd_cy * 1e6:>10.1f}us {fwd_np / fwd_cy:>8.1f}x")

            bwd_np = best_of(lambda: _kernels_np.backward(
                w, up, t, b, a, 1.0, 1.0, 25.0), args.repeats)
            bwd_cy = best_of(lambda: _kernels.backward(
                w, up, t, b, a, 1.0, 1.0, 25.0), args.repeats)
            print(f"bwd  D={D:<6} B={B} {bwd_np * 1e6:>10.1f}us "
                  f"{bwd_cy * 1e6:>10.1f}us {bwd_np / bwd_cy:>8.1f}x")


if __name__ == "__main__":
    main()
