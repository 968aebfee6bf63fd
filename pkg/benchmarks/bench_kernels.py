"""Time the numba and numpy paths of each integer kernel on the same inputs.

Usage: python3 benchmarks/bench_kernels.py [--scale N] [--repeat R]

The first numba call of each kernel is reported separately as compile time
(zero when the on-disk cache is warm).  Results are checked for equality.
"""
import argparse
import time

import numpy as np

from nftforensics import _kernels


def inputs(scale: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    n = scale
    src = rng.integers(0, n, 4 * n).astype(np.int64)
    dst = rng.integers(0, n, 4 * n).astype(np.int64)
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    words = [rng.integers(97, 123, rng.integers(4, 24)).astype(np.int64) for _ in range(400)]
    hashes = rng.integers(0, 2**63, max(2, scale // 20), dtype=np.int64).astype(np.uint64)
    return {
        "scc_labels": lambda k: k.scc_labels(n, indptr, dst[order]),
        "wcc_labels": lambda k: k.wcc_labels(n, src, dst, np.ones(n, bool)),
        "edit_distance": lambda k: [k.edit_distance(a, b) for a, b in zip(words, words[1:])],
        "hamming_pairs": lambda k: k.hamming_pairs(hashes, 12),
    }


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=int, default=100_000, help="graph nodes (edges = 4x)")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels.numba_kernels is None:
        raise SystemExit("numba is not importable; nothing to compare")
    cases = inputs(args.scale)
    print(f"{'kernel':<14} {'compile s':>10} {'numba s':>10} {'numpy s':>10} {'speedup':>8}  equal")
    for name, run in cases.items():
        t = time.perf_counter()
        jit_out = run(_kernels.numba_kernels)
        compile_s = time.perf_counter() - t
        np_out = run(_kernels.numpy_kernels)
        jit_s = best_of(lambda: run(_kernels.numba_kernels), args.repeat)
        np_s = best_of(lambda: run(_kernels.numpy_kernels), args.repeat)
        print(f"{name:<14} {compile_s:>10.3f} {jit_s:>10.4f} {np_s:>10.4f} {np_s / jit_s:>7.1f}x  "
              f"{same(jit_out, np_out)}")


if __name__ == "__main__":
    main()
