"""Dual-sparse GEMV execution model with load/compute counters.

Storage orientation: the compressed unit ("slab") is the set of weights
gated by one activation element, i.e. column ``i`` of the mathematical
weight matrix W (n_out x k). ``CsrWeights`` therefore compresses along
the activation dimension: structural row ``i`` of the CSR holds the
nonzeros of ``W[:, i]``, indexed by output row. This is the single place
where the row/column duality is spelled out; everything else in the
package uses the mathematical n_out x k orientation.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, MalformedCsr
from .sparsity import round_half_up


@dataclass
class CsrWeights:
    """Slab-compressed weights: one compressed run per activation index."""

    n_rows: int          # number of slabs == activation dimension k
    n_cols: int          # output dimension n
    row_ptr: np.ndarray  # int64, length n_rows + 1, nondecreasing
    col_idx: np.ndarray  # int64, output-row index per stored nonzero
    vals: np.ndarray     # float64, aligned with col_idx

    def validate(self) -> None:
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (self.n_rows + 1,):
            raise MalformedCsr(f"row_ptr length {rp.shape} != n_rows + 1")
        if rp[0] != 0 or rp[-1] != len(self.vals) or len(ci) != len(self.vals):
            raise MalformedCsr("row_ptr endpoints disagree with storage length")
        if np.any(np.diff(rp) < 0):
            raise MalformedCsr("row_ptr must be nondecreasing")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise MalformedCsr("col_idx out of range")
        if len(ci) > 1:
            slab_of = np.repeat(np.arange(self.n_rows), np.diff(rp))
            interior = slab_of[1:] == slab_of[:-1]
            if np.any(np.diff(ci)[interior] <= 0):
                raise MalformedCsr("col_idx not strictly increasing within a slab")

    @classmethod
    def from_dense(cls, w: np.ndarray) -> "CsrWeights":
        """Compress an n_out x k weight matrix along the activation axis."""
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionMismatch(f"expected 2-D weights, got {w.shape}")
        n_out, k = w.shape
        row_ptr = np.zeros(k + 1, dtype=np.int64)
        cols, vals = [], []
        for i in range(k):
            nz = np.flatnonzero(w[:, i])
            cols.append(nz.astype(np.int64))
            vals.append(w[nz, i])
            row_ptr[i + 1] = row_ptr[i] + nz.size
        return cls(
            n_rows=k, n_cols=n_out, row_ptr=row_ptr,
            col_idx=np.concatenate(cols) if cols else np.zeros(0, np.int64),
            vals=np.concatenate(vals) if vals else np.zeros(0, np.float64))

    def to_dense(self) -> np.ndarray:
        w = np.zeros((self.n_cols, self.n_rows), dtype=np.float64)
        for i in range(self.n_rows):
            s, t = self.row_ptr[i], self.row_ptr[i + 1]
            w[self.col_idx[s:t], i] = self.vals[s:t]
        return w

    @property
    def nnz(self) -> int:
        return int(len(self.vals))


@dataclass
class ExecCounters:
    """Instrumentation for one GEMV: loads, MACs, slabs, capacity."""

    weights_loaded: int = 0
    macs: int = 0
    slabs_touched: int = 0
    total_weights: int = 0

    def merge(self, other: "ExecCounters") -> None:
        self.weights_loaded += other.weights_loaded
        self.macs += other.macs
        self.slabs_touched += other.slabs_touched
        self.total_weights += other.total_weights

    def as_dict(self) -> dict:
        return {
            "weightsLoaded": self.weights_loaded,
            "macs": self.macs,
            "slabsTouched": self.slabs_touched,
            "totalWeights": self.total_weights,
            "fraction": (self.weights_loaded / self.total_weights
                         if self.total_weights else 0.0),
        }


def spmspv(csr: CsrWeights, x: np.ndarray, mask: np.ndarray):
    """y = W (x * mask) touching only slabs whose mask bit is set.

    Counts one load and one MAC per stored nonzero in a selected slab.
    Output equals the dense masked GEMV under the same ascending-slab
    accumulation order.
    """
    csr.validate()
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask).reshape(-1)
    if x.shape != (csr.n_rows,) or mask.shape != (csr.n_rows,):
        raise DimensionMismatch(
            f"x/mask must have length {csr.n_rows}, got {x.shape}/{mask.shape}")
    y, loaded, touched = _kernels.spmspv_kernel(
        csr.row_ptr, csr.col_idx, csr.vals,
        np.ascontiguousarray(x), np.ascontiguousarray(mask, dtype=np.uint8),
        csr.n_cols)
    counters = ExecCounters(
        weights_loaded=int(loaded), macs=int(loaded),
        slabs_touched=int(touched),
        total_weights=csr.n_rows * csr.n_cols)
    return y, counters


def sram_load_fraction(mask_w: np.ndarray, px: float, worst_case: bool) -> float:
    """Fraction of all weight slots fetched for one GEMV at ``px`` sparsity.

    worst_case=True assumes the activation mask selects the densest
    ``round((1-px)*k)`` slabs (ties toward the lower index); otherwise
    returns the expectation under uniformly random slab selection,
    ``(1-px) * nnz / (n*k)``.
    """
    if not 0.0 <= px <= 1.0:
        raise ValueError(f"px must lie in [0, 1], got {px}")
    mask_w = np.asarray(mask_w)
    if mask_w.ndim != 2:
        raise DimensionMismatch(f"mask must be 2-D, got {mask_w.shape}")
    n, k = mask_w.shape
    slab_nnz = np.count_nonzero(mask_w, axis=0)
    if worst_case:
        n_sel = round_half_up((1.0 - px) * k)
        order = np.argsort(-slab_nnz, kind="stable")
        return float(slab_nnz[order[:n_sel]].sum()) / (n * k)
    return (1.0 - px) * float(slab_nnz.sum()) / (n * k)


def skew_report(mask_w: np.ndarray) -> dict:
    """Per-slab density summary for judging how uniform a mask is."""
    mask_w = np.asarray(mask_w)
    if mask_w.ndim != 2:
        raise DimensionMismatch(f"mask must be 2-D, got {mask_w.shape}")
    n = mask_w.shape[0]
    slab_nnz = np.count_nonzero(mask_w, axis=0)
    density = slab_nnz / n
    counts, edges = np.histogram(slab_nnz, bins=min(16, max(1, n)),
                                 range=(0, n))
    return {
        "slabNnz": slab_nnz.tolist(),
        "histogramCounts": counts.tolist(),
        "histogramEdges": edges.tolist(),
        "maxDensity": float(density.max()),
        "minDensity": float(density.min()),
        "meanDensity": float(density.mean()),
    }
