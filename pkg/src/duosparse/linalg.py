"""Dense symmetric linear algebra used by the calibration solvers.

All public operations take and return float64 row-major arrays and are
pure functions: identical input bits give identical output bits. Inputs
are symmetrized as ``(A + A.T) / 2`` before factorization to absorb the
accumulation asymmetry that Gram products pick up.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import DimensionMismatch, NotPositiveDefinite, SingularPivot

PIVOT_FLOOR = 1e-12


@dataclass
class CholeskyState:
    """Lower-triangular factor of an inverse Hessian, plus provenance.

    ``chol @ chol.T`` reconstructs the inverse of the dampened Hessian the
    state was built from. ``damping_lambda`` is the diagonal shift that was
    applied to the source matrix and ``source_dim`` its size.
    """

    chol: np.ndarray
    damping_lambda: float
    source_dim: int


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    return a


def cholesky_lower(a: np.ndarray) -> np.ndarray:
    """Lower-triangular G with G @ G.T == a for symmetric positive definite a.

    Raises NotPositiveDefinite when a pivot is not strictly positive,
    which signals callers to increase dampening and retry.
    """
    a = _as_square(a)
    sym = (a + a.T) / 2.0
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def dampen(h: np.ndarray, ratio: float) -> tuple[np.ndarray, float]:
    """Return ``h + lam*I`` with ``lam = ratio * mean(diag(h))`` and the lam used.

    A zero diagonal mean (all-zero calibration input) falls back to
    ``lam = ratio`` so downstream factorization stays defined.
    """
    h = _as_square(h, "hessian")
    mean_diag = float(np.mean(np.diag(h))) if h.shape[0] else 0.0
    lam = ratio * mean_diag if mean_diag != 0.0 else float(ratio)
    out = h.copy()
    np.fill_diagonal(out, np.diag(h) + lam)
    return out, lam


def invert_spd(h: np.ndarray, damping_lambda: float = 0.0) -> CholeskyState:
    """Invert a symmetric positive definite matrix via Cholesky.

    Returns the CholeskyState of the *inverse*: ``chol @ chol.T == inv(h)``.
    ``damping_lambda`` is recorded on the state for bookkeeping only; the
    caller is expected to have dampened ``h`` already.
    """
    h = _as_square(h, "hessian")
    g = cholesky_lower(h)
    hinv = cho_solve((g, True), np.eye(h.shape[0]))
    hinv = (hinv + hinv.T) / 2.0
    chol = cholesky_lower(hinv)
    return CholeskyState(chol=chol, damping_lambda=float(damping_lambda),
                         source_dim=h.shape[0])


def eliminate_inverse(hinv: np.ndarray, p: int) -> np.ndarray:
    """Gaussian-eliminate index ``p`` out of an inverse Hessian.

    Returns ``hinv - hinv[:,p] hinv[p,:] / hinv[p,p]`` with row and column
    ``p`` set to exactly zero. The surviving submatrix equals the inverse
    of the original matrix with row/column ``p`` deleted.
    """
    hinv = _as_square(hinv, "inverse hessian")
    pivot = hinv[p, p]
    if abs(pivot) < PIVOT_FLOOR:
        raise SingularPivot(f"pivot {pivot!r} at index {p} below {PIVOT_FLOOR}")
    out = hinv - np.outer(hinv[:, p], hinv[p, :]) / pivot
    out[p, :] = 0.0
    out[:, p] = 0.0
    return out
