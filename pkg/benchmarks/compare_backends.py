"""Compare the numba kernels against the pure-numpy fallbacks.

Runs each hot kernel on representative sizes with both implementations
and prints a timing table. The two paths apply identical per-element
update sequences, so outputs are checked for bitwise equality as part of
the run.

Usage:  python benchmarks/compare_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from duosparse import _kernels
from duosparse.simulator import CsrWeights


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_block_update(n, k, bw, repeats):
    rng = np.random.default_rng(0)
    w = rng.standard_normal((n, k))
    mask = (rng.random((n, bw)) < 0.5).astype(np.uint8)
    chol = np.tril(rng.standard_normal((k, k)))
    np.fill_diagonal(chol, np.abs(np.diag(chol)) + 1.0)
    dmat = np.triu(rng.standard_normal((k, k)), 1)
    i = k - bw

    w_nb, w_np = w.copy(), w.copy()
    e_nb = _kernels._block_update_numba(w_nb, mask, chol, dmat, i, bw)
    e_np = _kernels._block_update_numpy(w_np, mask, chol, dmat, i, bw)
    assert np.array_equal(w_nb, w_np) and np.array_equal(e_nb, e_np)

    t_nb = best_of(lambda: _kernels._block_update_numba(
        w.copy(), mask, chol, dmat, i, bw), repeats)
    t_np = best_of(lambda: _kernels._block_update_numpy(
        w.copy(), mask, chol, dmat, i, bw), repeats)
    return t_nb, t_np


def bench_spmspv(n, k, density, repeats):
    rng = np.random.default_rng(1)
    dense = rng.standard_normal((n, k)) * (rng.random((n, k)) < density)
    csr = CsrWeights.from_dense(dense)
    x = rng.standard_normal(k)
    mask = (rng.random(k) < 0.5).astype(np.uint8)
    args = (csr.row_ptr, csr.col_idx, csr.vals, x, mask, n)

    y_nb = _kernels._spmspv_numba(*args)[0]
    y_np = _kernels._spmspv_numpy(*args)[0]
    assert np.array_equal(y_nb, y_np)

    t_nb = best_of(lambda: _kernels._spmspv_numba(*args), repeats)
    t_np = best_of(lambda: _kernels._spmspv_numpy(*args), repeats)
    return t_nb, t_np


def bench_gemm_seq(n, k, m, repeats):
    rng = np.random.default_rng(2)
    w = rng.standard_normal((n, k))
    x = rng.standard_normal((k, m))
    assert np.array_equal(_kernels._gemm_seq_numba(w, x),
                          _kernels._gemm_seq_numpy(w, x))
    t_nb = best_of(lambda: _kernels._gemm_seq_numba(w, x), repeats)
    t_np = best_of(lambda: _kernels._gemm_seq_numpy(w, x), repeats)
    return t_nb, t_np


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rows = [
        ("block_update n=512 k=512 B=128",
         bench_block_update(512, 512, 128, args.repeats)),
        ("block_update n=1024 k=1024 B=128",
         bench_block_update(1024, 1024, 128, args.repeats)),
        ("spmspv n=2048 k=2048 50% dense",
         bench_spmspv(2048, 2048, 0.5, args.repeats)),
        ("spmspv n=4096 k=4096 25% dense",
         bench_spmspv(4096, 4096, 0.25, args.repeats)),
        ("gemm_seq 256x512 @ 512x256",
         bench_gemm_seq(256, 512, 256, args.repeats)),
    ]

    print(f"{'kernel':<36} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name, (t_nb, t_np) in rows:
        print(f"{name:<36} {t_nb * 1e3:>8.2f}ms {t_np * 1e3:>8.2f}ms "
              f"{t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
