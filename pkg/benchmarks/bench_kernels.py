#!/usr/bin/env python3
"""Numba vs pure-numpy timings for the lattice and quantizer kernels.

    python benchmarks/bench_kernels.py [--repeats 20]

Both variants are imported side by side, so the env flag does not matter here.
"""
import argparse
import time

import numpy as np

from rnnt_tts import kernels
from rnnt_tts.rnnt import edge_scores


def random_grid(rng, n, t, v):
    z = rng.standard_normal((n, t + 1, v + 1))
    z -= np.log(np.exp(z).sum(-1, keepdims=True))
    return edge_scores(z, rng.integers(0, v, size=t))


def best_of(fn, args, repeats):
    fn(*args)  # compile / warm caches
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'kernel':<16}{'shape':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for n, t in [(8, 24), (32, 120), (100, 400)]:
        blank, emit = random_grid(rng, n, t, 64)
        alpha = kernels.forward_np(blank, emit)
        beta = kernels.backward_np(blank, emit)
        total = float(beta[0, 0])
        cases = [
            ("forward", kernels.forward_np, kernels.forward_nb, (blank, emit)),
            ("backward", kernels.backward_np, kernels.backward_nb, (blank, emit)),
            ("posteriors", kernels.edge_posteriors_np, kernels.edge_posteriors_nb, (blank, emit, alpha, beta, total)),
            ("viterbi", kernels.viterbi_np, kernels.viterbi_nb, (blank, emit)),
        ]
        for name, f_np, f_nb, fargs in cases:
            a, b = best_of(f_np, fargs, args.repeats), best_of(f_nb, fargs, args.repeats)
            print(f"{name:<16}{f'N={n} T={t}':<18}{a * 1e3:>10.3f}{b * 1e3:>10.3f}{a / b:>8.1f}x")

    for frames in (100, 2000):
        residual = rng.standard_normal((frames, 8))
        book = rng.standard_normal((64, 8))
        a = best_of(kernels.nearest_codes_np, (residual, book), args.repeats)
        b = best_of(kernels.nearest_codes_nb, (residual, book), args.repeats)
        print(f"{'nearest_codes':<16}{f'T={frames} V=64':<18}{a * 1e3:>10.3f}{b * 1e3:>10.3f}{a / b:>8.1f}x")


if __name__ == "__main__":
    main()
