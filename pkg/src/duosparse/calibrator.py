"""Blocked dual-sparsity calibrator.

Per layer this precomputes the correction terms (Q, U, a, b, c, D) from
the Cholesky factor of the inverse Hessian, scores each block of columns
with the current weights, zeroes the lowest-score entries, and applies
compensation column by column with a lazy batch update for everything
beyond the block. ``method`` selects between the residual-corrected
solver ("duogpt"), the same path with all correction terms zeroed
("sparsegpt"), and the compensation-free baselines ("wanda",
"magnitude").
"""

import functools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (DimensionMismatch, InfeasibleSparsity,
                     NotPositiveDefinite, SingularPivot)
from .linalg import PIVOT_FLOOR, CholeskyState, dampen, invert_spd
from .sparsity import round_half_up

METHODS = ("duogpt", "sparsegpt", "wanda", "magnitude")


@dataclass
class Precomputed:
    """Correction terms shared by scoring and compensation.

    With q = dX @ xhat.T @ L: u is the strict upper triangle of q,
    a the row sum-squares of dX, b the row sum-squares of u,
    c = diag(q) / diag(L), and d = u @ L.T. Only the diagonal and strict
    upper triangle of q feed the solver, so the full q is materialized
    on demand from the stashed dX @ xhat.T product.
    """

    u: np.ndarray
    d: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    _px: np.ndarray = None    # dX @ xhat.T
    _chol: np.ndarray = None

    @functools.cached_property
    def q(self) -> np.ndarray:
        return self._px @ self._chol

    @classmethod
    def zeros(cls, k: int) -> "Precomputed":
        z = np.zeros((k, k))
        v = np.zeros(k)
        return cls(u=z, d=z.copy(), a=v, b=v.copy(), c=v.copy(),
                   _px=z.copy(), _chol=np.eye(k))


@dataclass
class PruneConfig:
    """Knobs for one calibration run. Defaults are the paper-mode settings."""

    pw: float = 0.5
    px: float = 0.5
    block_size: int = 128
    damp_ratio: float = 0.1
    act_order: bool = True
    method: str = "duogpt"
    seed: int = 0
    row_wise: bool = True
    max_damp_retries: int = 5

    def validate(self) -> None:
        if not 0.0 <= self.pw <= 1.0:
            raise InfeasibleSparsity(f"pw must lie in [0, 1], got {self.pw}")
        if not 0.0 <= self.px <= 1.0:
            raise ValueError(f"px must lie in [0, 1], got {self.px}")
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")
        if self.damp_ratio < 0:
            raise ValueError(f"damp_ratio must be >= 0, got {self.damp_ratio}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")


@dataclass
class PruneOutcome:
    """Result of calibrating one layer."""

    pruned_w: np.ndarray
    mask_w: np.ndarray
    per_row_nnz: np.ndarray
    layer_error: float
    score_stats: dict = field(default_factory=dict)
    act_order_perm: np.ndarray = None
    damping_lambda: float = 0.0


_CHUNK = 128


def _masked_pl(p, chol):
    """Strict upper triangle of P @ L for lower-triangular L.

    Only the masked region is ever consumed, so the product is built in
    column chunks that skip the dead lower triangle (about k^3/3 flops
    instead of the 2 k^3 of a full GEMM).
    """
    k = p.shape[0]
    u = np.zeros((k, k))
    for j0 in range(0, k, _CHUNK):
        j1 = min(j0 + _CHUNK, k)
        u[:j1, j0:j1] = p[:j1, j0:] @ chol[j0:, j0:j1]
    return np.triu(u, 1)


def _strict_upper_ult(u, chol):
    """U @ L.T for strictly-upper U and lower-triangular L.

    The result is strictly upper triangular; chunk pairs below the
    diagonal are skipped and the shared inner range (i0, j1) covers every
    surviving term (terms outside it multiply structural zeros).
    """
    k = u.shape[0]
    d = np.zeros((k, k))
    for i0 in range(0, k, _CHUNK):
        i1 = min(i0 + _CHUNK, k)
        for j0 in range(i0, k, _CHUNK):
            j1 = min(j0 + _CHUNK, k)
            d[i0:i1, j0:j1] = u[i0:i1, i0 + 1:j1] @ chol[j0:j1, i0 + 1:j1].T
    return d


def precompute(state: CholeskyState, xhat: np.ndarray,
               delta_x: np.ndarray) -> Precomputed:
    """Build the correction terms from the Cholesky factor of inv(H).

    a and b are formed by elementwise squaring and row summation; the
    k-by-k Gram products are never materialized. The two triangular
    products exploit their known-zero regions so the whole precompute
    stays dominated by the m k^2 term at calibration sizes.
    """
    chol = state.chol
    diag = np.diag(chol)
    if np.any(diag < PIVOT_FLOOR):
        raise SingularPivot("Cholesky factor has a near-zero diagonal entry")
    if xhat.shape != delta_x.shape:
        raise DimensionMismatch(
            f"xhat {xhat.shape} and delta_x {delta_x.shape} disagree")
    p = delta_x @ xhat.T
    u = _masked_pl(p, chol)
    diag_q = np.einsum("ij,ji->i", p, chol)
    a = np.sum(delta_x * delta_x, axis=1)
    b = np.sum(u * u, axis=1)
    c = diag_q / diag
    d = _strict_upper_ult(u, chol)
    return Precomputed(u=u, d=d, a=a, b=b, c=c, _px=p, _chol=chol)


def score_block(w: np.ndarray, j0: int, bw: int, state: CholeskyState,
                pre: Precomputed) -> np.ndarray:
    """Pruning scores for columns ``j0 .. j0+bw-1`` at the current weights."""
    if j0 + bw > w.shape[1]:
        raise DimensionMismatch(
            f"block [{j0}, {j0 + bw}) exceeds {w.shape[1]} columns")
    sl = slice(j0, j0 + bw)
    diag = np.diag(state.chol)[sl]
    factor = 1.0 / diag**2 + pre.a[sl] - pre.b[sl] + 2.0 * pre.c[sl]
    return w[:, sl] ** 2 * factor[None, :]


def reconstruction_error(w_pruned, w_orig, xhat, xtilde) -> float:
    """Squared Frobenius error ``||w_pruned @ xhat - w_orig @ xtilde||^2``."""
    w_pruned = np.asarray(w_pruned, dtype=np.float64)
    w_orig = np.asarray(w_orig, dtype=np.float64)
    if w_pruned.shape != w_orig.shape:
        raise DimensionMismatch(
            f"weight shapes {w_pruned.shape} and {w_orig.shape} disagree")
    if xhat.shape != xtilde.shape or w_pruned.shape[1] != xhat.shape[0]:
        raise DimensionMismatch(
            f"inputs {xhat.shape}/{xtilde.shape} do not chain with "
            f"weights {w_pruned.shape}")
    diff = w_pruned @ xhat - w_orig @ xtilde
    return float(np.sum(diff * diff))


def _invert_with_retries(h, cfg):
    """Dampen and invert, doubling the ratio on failed factorizations."""
    ratio = cfg.damp_ratio
    last = None
    for _ in range(cfg.max_damp_retries + 1):
        hd, lam = dampen(h, ratio)
        try:
            return invert_spd(hd, damping_lambda=lam)
        except NotPositiveDefinite as exc:
            last = exc
            ratio = ratio * 2 if ratio > 0 else 1e-8
    raise NotPositiveDefinite(
        f"Hessian not positive definite after {cfg.max_damp_retries} "
        f"dampening retries (final ratio {ratio})") from last


def _block_plan(k, block_size, pw, n, row_wise):
    plan = []
    for i in range(0, k, block_size):
        bw = min(block_size, k - i)
        per = round_half_up(pw * bw)
        count = per if row_wise else round_half_up(pw * bw * n)
        plan.append((i, bw, count))
    return plan


def _select_mask(scores, count, row_wise):
    mask = np.ones(scores.shape, dtype=np.uint8)
    if count <= 0:
        return mask
    if row_wise:
        order = np.argsort(scores, axis=1, kind="stable")
        np.put_along_axis(mask, order[:, :count], 0, axis=1)
    else:
        flat = np.argsort(scores, axis=None, kind="stable")
        mask.flat[flat[:count]] = 0
    return mask


def prune_layer(w, xhat, xtilde, cfg: PruneConfig) -> PruneOutcome:
    """Calibrate one linear layer to ``cfg.pw`` weight sparsity.

    ``xhat`` is the sparse calibration input (already activation-pruned),
    ``xtilde`` the dense-model input at the same layer. The returned mask
    refers to the original column order even when ``act_order`` permutes
    the processing order; the permutation used is reported on the outcome.
    """
    cfg.validate()
    w = np.asarray(w, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    xtilde = np.asarray(xtilde, dtype=np.float64)
    if w.ndim != 2 or xhat.ndim != 2:
        raise DimensionMismatch("weights and inputs must be 2-D")
    n, k = w.shape
    if xhat.shape != xtilde.shape or xhat.shape[0] != k:
        raise DimensionMismatch(
            f"weights {w.shape} need inputs of {k} rows, got "
            f"{xhat.shape} and {xtilde.shape}")

    w_orig, xhat_orig, xtilde_orig = w, xhat, xtilde
    plan = _block_plan(k, cfg.block_size, cfg.pw, n, cfg.row_wise)

    if all(count == 0 for _, _, count in plan):
        # Nothing would be pruned: leave the layer untouched rather than
        # applying residual-only compensation to an unpruned layer.
        mask = np.ones((n, k), dtype=np.uint8)
        return PruneOutcome(
            pruned_w=w.copy(), mask_w=mask,
            per_row_nnz=np.full(n, k, dtype=np.int64),
            layer_error=reconstruction_error(w, w, xhat, xtilde),
            score_stats={}, act_order_perm=None, damping_lambda=0.0)

    h = xhat @ xhat.T
    perm = None
    if cfg.act_order:
        perm = np.argsort(-np.diag(h), kind="stable")
        w = w[:, perm]
        xhat = xhat[perm, :]
        xtilde = xtilde[perm, :]
        h = h[np.ix_(perm, perm)]

    state = None
    pre = None
    lam = 0.0
    xhat_row_norms = None
    if cfg.method in ("duogpt", "sparsegpt"):
        state = _invert_with_retries(h, cfg)
        lam = state.damping_lambda
        if cfg.method == "duogpt":
            pre = precompute(state, xhat, xtilde - xhat)
        else:
            pre = Precomputed.zeros(k)
    elif cfg.method == "wanda":
        xhat_row_norms = np.linalg.norm(xhat, axis=1)

    wwork = np.array(w, dtype=np.float64, order="C", copy=True)
    mask = np.ones((n, k), dtype=np.uint8)
    stat_min, stat_max = np.inf, -np.inf
    stat_sum, stat_neg, stat_count = 0.0, 0, 0

    for i, bw, count in plan:
        sl = slice(i, i + bw)
        if cfg.method in ("duogpt", "sparsegpt"):
            scores = score_block(wwork, i, bw, state, pre)
        elif cfg.method == "wanda":
            scores = np.abs(wwork[:, sl]) * xhat_row_norms[sl][None, :]
        else:
            scores = np.abs(wwork[:, sl])
        stat_min = min(stat_min, float(scores.min()))
        stat_max = max(stat_max, float(scores.max()))
        stat_sum += float(scores.sum())
        stat_neg += int(np.count_nonzero(scores < 0))
        stat_count += scores.size

        mask_blk = _select_mask(scores, count, cfg.row_wise)
        mask[:, sl] = mask_blk

        if cfg.method in ("duogpt", "sparsegpt"):
            e = _kernels.block_update(wwork, mask_blk, state.chol, pre.d, i, bw)
            if i + bw < k:
                rest = slice(i + bw, k)
                wwork[:, rest] = (
                    wwork[:, rest]
                    - e @ state.chol[rest, sl].T
                    + wwork[:, sl] @ pre.d[sl, rest]
                )

    pruned = wwork * mask
    if perm is not None:
        inv = np.argsort(perm)
        pruned = pruned[:, inv]
        mask = mask[:, inv]

    return PruneOutcome(
        pruned_w=pruned,
        mask_w=mask,
        per_row_nnz=mask.sum(axis=1, dtype=np.int64),
        layer_error=reconstruction_error(pruned, w_orig, xhat_orig, xtilde_orig),
        score_stats={
            "min": stat_min,
            "max": stat_max,
            "mean": stat_sum / stat_count,
            "negative_frac": stat_neg / stat_count,
            "count": stat_count,
        },
        act_order_perm=perm,
        damping_lambda=lam,
    )
