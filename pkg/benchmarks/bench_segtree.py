"""Benchmark the adjacent-merge kernel: numba @njit vs pure numpy.

Usage: python benchmarks/bench_segtree.py [T] [d]

The first numba call includes JIT compilation; it is timed separately.
"""

import sys
import time

import numpy as np

from wmplan import accel


def run(fn, sums, counts, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(sums, counts)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    T = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
    d = int(sys.argv[2]) if len(sys.argv) > 2 else 64
    rng = np.random.default_rng(0)
    sums = rng.normal(size=(T, d))
    counts = np.ones(T)

    numpy_time = run(accel.merge_sequence_numpy, sums, counts)
    print(f"numpy  : {numpy_time:.3f} s   (T={T}, d={d})")

    try:
        numba_fn = accel._build_numba_kernel()
    except ImportError:
        print("numba  : not installed")
        return
    t0 = time.perf_counter()
    numba_fn(sums[:8], counts[:8])
    print(f"numba JIT compile+first call: {time.perf_counter() - t0:.2f} s")
    numba_time = run(numba_fn, sums, counts)
    print(f"numba  : {numba_time:.3f} s   (speedup x{numpy_time / numba_time:.1f})")

    l1, r1, d1 = accel.merge_sequence_numpy(sums, counts)
    l2, r2, d2 = numba_fn(sums, counts)
    assert np.array_equal(l1, l2) and np.array_equal(r1, r2)
    print("merge sequences identical across backends")


if __name__ == "__main__":
    main()
