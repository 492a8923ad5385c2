"""Exact, slow reference solver for per-row pruning.

This module maintains the inverse Hessian explicitly, eliminates pruned
indices one Gaussian step at a time, and keeps the output residual
``r = w (xtilde - xhat)`` in sync with the current row. It exists to
ground-truth the blocked calibrator at small sizes (k <= 32 or so) and is
deliberately free of any precomputation tricks.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSparsity, SingularPivot
from .linalg import PIVOT_FLOOR, dampen, eliminate_inverse, invert_spd
from .sparsity import round_half_up

MODES = ("duogpt", "sparsegpt")


@dataclass
class RowPruneTrace:
    """Step-by-step record of greedily pruning one weight row."""

    pruned_indices: list = field(default_factory=list)
    final_row: np.ndarray = None
    loss_history: list = field(default_factory=list)
    residual: np.ndarray = None
    damping_lambda: float = 0.0


def duo_loss_and_update(w, p, hinv, xhat, r):
    """Closed-form loss and survivor update for removing weight ``p``.

    Given the current row ``w``, inverse Hessian ``hinv``, sparse
    calibration input ``xhat`` and output residual ``r``, returns
    ``(loss, delta_w)`` where ``delta_w`` is the minimizer of
    ``||delta_w @ xhat - r||^2`` subject to ``delta_w[p] = -w[p]``
    (plus the ridge term implied by any dampening baked into ``hinv``).
    ``delta_w[p]`` is set to ``-w[p]`` exactly.
    """
    w = np.asarray(w, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    pivot = hinv[p, p]
    if pivot < PIVOT_FLOOR:
        raise SingularPivot(f"hinv[{p},{p}] = {pivot!r} is not usable as a pivot")
    hinv_mp = eliminate_inverse(hinv, p)
    rx = r @ xhat.T
    loss = (
        w[p] ** 2 / pivot
        + r @ r
        - rx @ hinv_mp @ rx
        + (2.0 * w[p] / pivot) * (rx @ hinv[:, p])
    )
    delta = -(w[p] / pivot) * hinv[p, :] + rx @ hinv_mp
    delta[p] = -w[p]
    return float(loss), delta


def prune_row_exact(w, xhat, xtilde, pw, damp_ratio=0.1, mode="duogpt"):
    """Greedy optimal-order pruning of one row to ``pw`` sparsity.

    At every step the candidate with the smallest closed-form loss is
    removed, the survivors are compensated, the residual is refreshed
    from the updated row, and the pruned index is Gaussian-eliminated
    out of the inverse Hessian. ``mode="sparsegpt"`` pins the residual
    at zero throughout, which reduces each step to the classic
    inverse-Hessian loss/update.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    w = np.asarray(w, dtype=np.float64).copy()
    xhat = np.asarray(xhat, dtype=np.float64)
    xtilde = np.asarray(xtilde, dtype=np.float64)
    k, m = xhat.shape
    n_prune = round_half_up(pw * k)
    if n_prune > k:
        raise InfeasibleSparsity(f"cannot prune {n_prune} of {k} weights")

    h, lam = dampen(xhat @ xhat.T, damp_ratio)
    state = invert_spd(h, damping_lambda=lam)
    hinv = state.chol @ state.chol.T
    hinv = (hinv + hinv.T) / 2.0

    dx = xtilde - xhat
    residual = w @ dx if mode == "duogpt" else np.zeros(m)
    trace = RowPruneTrace(damping_lambda=lam)
    alive = list(range(k))

    for _ in range(n_prune):
        best_p, best_loss = None, None
        for p in alive:
            loss, _ = duo_loss_and_update(w, p, hinv, xhat, residual)
            if best_loss is None or loss < best_loss:
                best_p, best_loss = p, loss
        loss, delta = duo_loss_and_update(w, best_p, hinv, xhat, residual)
        w = w + delta
        w[best_p] = 0.0
        hinv = eliminate_inverse(hinv, best_p)
        if mode == "duogpt":
            residual = w @ dx
        alive.remove(best_p)
        trace.pruned_indices.append(best_p)
        trace.loss_history.append(loss)

    trace.final_row = w
    trace.residual = residual
    return trace


def exact_score_column(w_mat, p, hinv, xhat, delta_x):
    """Per-row pruning score for column ``p``, computed the direct way.

    Evaluates ``w[:,p]^2 * (1/hinv[p,p] + a_p - b_p + 2 c_p)`` with the
    three correction terms formed from ``delta_x[p,:]`` and the supplied
    inverse Hessian, using a fresh Gaussian elimination for the ``-p``
    sandwich rather than any factored shortcut.
    """
    w_mat = np.asarray(w_mat, dtype=np.float64)
    pivot = hinv[p, p]
    if pivot < PIVOT_FLOOR:
        raise SingularPivot(f"hinv[{p},{p}] = {pivot!r} is not usable as a pivot")
    hinv_mp = eliminate_inverse(hinv, p)
    dxp = np.asarray(delta_x, dtype=np.float64)[p, :]
    v = dxp @ xhat.T
    a = dxp @ dxp
    b = v @ hinv_mp @ v
    c = (v @ hinv[:, p]) / pivot
    return w_mat[:, p] ** 2 * (1.0 / pivot + a - b + 2.0 * c)
