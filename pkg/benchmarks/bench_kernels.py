#!/usr/bin/env python3
"""Numba kernels vs the pure-numpy fallback.

Times the walk DP (int64 regime and multi-prime regime vs object big ints)
and the modular echelon used by the quasi search.  Results from both
backends are compared before any timing is reported.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from quasiholo import _kernels
from quasiholo.exactmath import primes_below
from quasiholo.walks import GESSEL, KREWERAS, KREWERAS_3D, enumerate_walks


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_dp(repeat):
    cases = [
        ("kreweras m=39 (int64)", KREWERAS, "quadrant", 39),
        ("gessel m=31 (int64)", GESSEL, "quadrant", 31),
        ("gessel m=200 (multi-prime)", GESSEL, "quadrant", 200),
        ("3D kreweras m=31 (int64)", KREWERAS_3D, "octant3d", 31),
        ("3D kreweras m=80 (multi-prime)", KREWERAS_3D, "octant3d", 80),
    ]
    print(f"{'walk DP':<32}{'numba':>10}{'numpy':>10}{'speedup':>10}")
    for name, steps, region, m in cases:
        enumerate_walks(steps, region, 2, backend="numba")  # compile outside the timing
        tn, a = best_of(lambda: enumerate_walks(steps, region, m, backend="numba"), repeat)
        tp, b = best_of(lambda: enumerate_walks(steps, region, m, backend="numpy"), repeat)
        assert a.returns == b.returns, name
        print(f"{name:<32}{tn:>9.3f}s{tp:>9.3f}s{tp / tn:>9.1f}x")


def bench_echelon(repeat):
    rng = np.random.default_rng(0)
    p = primes_below(_kernels.MODULUS_LIMIT, 1)[0]
    print(f"\n{'modular echelon':<32}{'numba':>10}{'numpy':>10}{'speedup':>10}")
    for rows, cols, rank in ((400, 200, 150), (1500, 460, 376)):
        a = (rng.integers(0, 1000, (rows, rank)) @ rng.integers(0, 1000, (rank, cols))) % p
        a = a.astype(np.int64)
        _kernels.echelon_mod(a[:5, :5].copy(), p, use_numba=True)
        tn, x = best_of(lambda: _kernels.echelon_mod(a.copy(), p, use_numba=True), repeat)
        tp, y = best_of(lambda: _kernels.echelon_mod(a.copy(), p, use_numba=False), repeat)
        assert x[0] == y[0] == rank
        assert np.array_equal(x[2], y[2])
        name = f"{rows}x{cols} rank {rank}"
        print(f"{name:<32}{tn:>9.3f}s{tp:>9.3f}s{tp / tn:>9.1f}x")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    bench_dp(args.repeat)
    bench_echelon(args.repeat)


if __name__ == "__main__":
    main()
