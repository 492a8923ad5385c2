"""Hot inner-loop kernels with a numba and a pure-numpy implementation.

The numba path is the default. Set ``DUOSPARSE_BACKEND=numpy`` in the
environment (before import) to force the pure-numpy fallback, e.g. on
machines where numba is unavailable or for debugging. Both paths apply
updates in the same per-element order, so results agree bitwise for the
loop kernels; see ``benchmarks/compare_backends.py`` for a speed
comparison.
"""

import os

import numpy as np

BACKEND_ENV = "DUOSPARSE_BACKEND"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def _pick_backend() -> str:
    requested = os.environ.get(BACKEND_ENV, "").strip().lower()
    if requested in ("numba", "numpy"):
        if requested == "numba" and not HAS_NUMBA:
            raise ImportError("DUOSPARSE_BACKEND=numba but numba is not importable")
        return requested
    return "numba" if HAS_NUMBA else "numpy"


BACKEND = _pick_backend()


# ---------------------------------------------------------------------------
# Blocked compensation sweep.
#
# For each column j of the current block, splits off the pruned part
# (E = (w_j - w_j*mask_j) / L_jj) and applies, to the in-block columns
# q in [j, i+bw):   W[:,q] <- W[:,q] - E*L[q,j] + wj*D[j,q]
# where wj is column j's value when the column is processed. D[j, q<=j]
# and L[q<j, j] are zero, so already-finalized columns are not touched.
# ---------------------------------------------------------------------------

def _block_update_numpy(w, mask_blk, chol, dmat, i, bw):
    n = w.shape[0]
    e = np.zeros((n, bw), dtype=np.float64)
    end = i + bw
    for t in range(bw):
        j = i + t
        wj = w[:, j].copy()
        pj = np.where(mask_blk[:, t] != 0, wj, 0.0)
        e[:, t] = (wj - pj) / chol[j, j]
        w[:, j:end] = (
            w[:, j:end]
            - np.outer(e[:, t], chol[j:end, j])
            + np.outer(wj, dmat[j, j:end])
        )
    return e


if HAS_NUMBA:

    @njit(cache=True)
    def _block_update_numba(w, mask_blk, chol, dmat, i, bw):
        n = w.shape[0]
        e = np.zeros((n, bw), dtype=np.float64)
        end = i + bw
        for t in range(bw):
            j = i + t
            ljj = chol[j, j]
            for r in range(n):
                wj = w[r, j]
                if mask_blk[r, t] != 0:
                    pj = wj
                else:
                    pj = 0.0
                ev = (wj - pj) / ljj
                e[r, t] = ev
                for q in range(j, end):
                    w[r, q] = w[r, q] - ev * chol[q, j] + wj * dmat[j, q]
        return e

else:  # pragma: no cover
    _block_update_numba = None


# ---------------------------------------------------------------------------
# spMspV over slab-compressed weights. Slabs are visited in ascending
# index order and entries within a slab in storage order, so the
# accumulation order is fixed and reproducible.
# ---------------------------------------------------------------------------

def _spmspv_numpy(row_ptr, col_idx, vals, x, mask, n_out):
    y = np.zeros(n_out, dtype=np.float64)
    loaded = 0
    touched = 0
    for i in range(row_ptr.shape[0] - 1):
        if mask[i] == 0:
            continue
        touched += 1
        s, t = row_ptr[i], row_ptr[i + 1]
        if t > s:
            loaded += t - s
            y[col_idx[s:t]] += vals[s:t] * x[i]
    return y, loaded, touched


if HAS_NUMBA:

    @njit(cache=True)
    def _spmspv_numba(row_ptr, col_idx, vals, x, mask, n_out):
        y = np.zeros(n_out, dtype=np.float64)
        loaded = 0
        touched = 0
        for i in range(row_ptr.shape[0] - 1):
            if mask[i] == 0:
                continue
            touched += 1
            xi = x[i]
            for s in range(row_ptr[i], row_ptr[i + 1]):
                y[col_idx[s]] += vals[s] * xi
                loaded += 1
        return y, loaded, touched

else:  # pragma: no cover
    _spmspv_numba = None


# ---------------------------------------------------------------------------
# Dense GEMM with a fixed accumulation order (ascending slab index).
# Used where outputs must match the spMspV kernel bit for bit.
# ---------------------------------------------------------------------------

def _gemm_seq_numpy(w, x):
    n = w.shape[0]
    m = x.shape[1]
    y = np.zeros((n, m), dtype=np.float64)
    for i in range(w.shape[1]):
        y += np.outer(w[:, i], x[i, :])
    return y


if HAS_NUMBA:

    @njit(cache=True)
    def _gemm_seq_numba(w, x):
        n = w.shape[0]
        k = w.shape[1]
        m = x.shape[1]
        y = np.zeros((n, m), dtype=np.float64)
        for i in range(k):
            for r in range(n):
                wri = w[r, i]
                for c in range(m):
                    y[r, c] += wri * x[i, c]
        return y

else:  # pragma: no cover
    _gemm_seq_numba = None


if BACKEND == "numba":
    block_update = _block_update_numba
    spmspv_kernel = _spmspv_numba
    gemm_seq = _gemm_seq_numba
else:
    block_update = _block_update_numpy
    spmspv_kernel = _spmspv_numpy
    gemm_seq = _gemm_seq_numpy
