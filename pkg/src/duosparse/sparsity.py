"""Magnitude-based activation masks and weight-mask application.

Masks are uint8 arrays of {0, 1} with the same shape as the data they
gate. Column pruning keeps ``round_half_up((1 - px) * k)`` entries of
largest absolute value per column; ties are broken toward the lower
index so results are deterministic.
"""

import math

import numpy as np

from .errors import DimensionMismatch


def round_half_up(x: float) -> int:
    """Round to nearest integer with .5 going up (not banker's rounding)."""
    return int(math.floor(x + 0.5))


def _check_fraction(p: float, name: str) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def magnitude_prune_columns(x: np.ndarray, px: float):
    """Zero all but the largest-magnitude entries of each column.

    Every column of the result has exactly ``round_half_up((1 - px) * k)``
    nonzero positions (the mask entries; stored values may still be zero).
    Returns ``(x * mask, mask)``.
    """
    px = _check_fraction(px, "px")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D array, got shape {x.shape}")
    k = x.shape[0]
    keep = round_half_up((1.0 - px) * k)
    # Stable sort on -|x| keeps the lower index first among ties.
    order = np.argsort(-np.abs(x), axis=0, kind="stable")
    mask = np.zeros(x.shape, dtype=np.uint8)
    if keep > 0:
        np.put_along_axis(mask, order[:keep, :], 1, axis=0)
    return x * mask, mask


def magnitude_prune_vector(x: np.ndarray, px: float):
    """Single-column specialization of :func:`magnitude_prune_columns`."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D array, got shape {x.shape}")
    xhat, mask = magnitude_prune_columns(x[:, None], px)
    return xhat[:, 0], mask[:, 0]


def apply_weight_mask(w: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Elementwise product of weights with a {0,1} mask."""
    w = np.asarray(w, dtype=np.float64)
    mask = np.asarray(mask)
    if w.shape != mask.shape:
        raise DimensionMismatch(
            f"weight shape {w.shape} does not match mask shape {mask.shape}")
    return w * mask


def mask_sparsity(mask: np.ndarray) -> float:
    """Fraction of zeros in a mask."""
    mask = np.asarray(mask)
    return float(mask.size - np.count_nonzero(mask)) / mask.size
