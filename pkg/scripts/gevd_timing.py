#!/usr/bin/env python3
"""Wall time of the joint diagonalization against the problem size LJ.

Prints best-of-N timings and the growth factor per doubling (about 8 for a
cubic cost once BLAS is saturated).
"""
import argparse
import time

import numpy as np

from vastzones.eig import joint_diagonalize


def random_spd(rng, n):
    a = rng.standard_normal((n, 2 * n))
    return a @ a.T / (2 * n)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[240, 480, 960, 1920])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    prev = None
    print(f"{'LJ':>6} {'seconds':>10} {'ratio':>7}")
    for n in args.sizes:
        pair = (random_spd(rng, n), random_spd(rng, n))
        joint_diagonalize(pair)
        best = np.inf
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            joint_diagonalize(pair)
            best = min(best, time.perf_counter() - t0)
        ratio = f"{best / prev:7.2f}" if prev else f"{'':>7}"
        print(f"{n:6d} {best:10.4f} {ratio}")
        prev = best


if __name__ == "__main__":
    main()
