"""Layerwise asymmetric calibration over a chain of linear layers.

Two activation streams are propagated: the dense stream runs the
original weights on unpruned inputs, the sparse stream runs the
already-pruned prefix on magnitude-pruned inputs. Each layer is
calibrated against its own pair of streams, then the sparse stream
advances through the freshly pruned weights.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .calibrator import PruneConfig, PruneOutcome, prune_layer
from .errors import DimensionMismatch, NonFiniteValue
from .sparsity import magnitude_prune_columns, mask_sparsity

ACTIVATIONS = ("none", "relu")


@dataclass
class Layer:
    weight: np.ndarray
    activation: str = "none"


@dataclass
class LayerStack:
    """Ordered chain of linear layers with elementwise activations."""

    layers: list

    def validate(self) -> None:
        if not self.layers:
            raise DimensionMismatch("stack must contain at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(
                    f"layer {i}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2:
                raise DimensionMismatch(f"layer {i}: weight must be 2-D")
            if i > 0 and self.layers[i - 1].weight.shape[0] != layer.weight.shape[1]:
                raise DimensionMismatch(
                    f"layer {i} expects {layer.weight.shape[1]} inputs but "
                    f"layer {i - 1} outputs {self.layers[i - 1].weight.shape[0]}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]


@dataclass
class CalibrationPair:
    """Aligned sparse/dense calibration inputs for one layer."""

    xhat: np.ndarray
    xtilde: np.ndarray
    px: float


@dataclass
class LayerReport:
    """Per-layer calibration record, with the inputs kept for auditing."""

    index: int
    outcome: PruneOutcome
    pair: CalibrationPair
    activation_sparsity: float = 0.0
    weight_sparsity: float = 0.0
    wall_time_sec: float = 0.0


def _activate(name: str, y: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(y, 0.0)
    return y


def calibrate_stack(stack: LayerStack, x0: np.ndarray, cfg: PruneConfig):
    """Prune every layer of ``stack`` against calibration inputs ``x0``.

    Returns ``(pruned_stack, reports)``. The dense stream is computed
    once from the original weights and never sees pruned values; the
    sparse stream is re-pruned to ``cfg.px`` column sparsity before
    every layer.
    """
    import time

    stack.validate()
    cfg.validate()
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise NonFiniteValue("calibration inputs contain NaN or Inf")
    if x0.shape[0] != stack.input_dim:
        raise DimensionMismatch(
            f"x0 has {x0.shape[0]} rows, stack expects {stack.input_dim}")

    dense_inputs = [x0]
    cur = x0
    for layer in stack.layers:
        cur = _activate(layer.activation, layer.weight @ cur)
        dense_inputs.append(cur)

    sparse = x0
    pruned_layers = []
    reports = []
    for idx, layer in enumerate(stack.layers):
        t0 = time.perf_counter()
        xhat, mask_x = magnitude_prune_columns(sparse, cfg.px)
        xtilde = dense_inputs[idx]
        outcome = prune_layer(layer.weight, xhat, xtilde, cfg)
        pruned_layers.append(Layer(weight=outcome.pruned_w,
                                   activation=layer.activation))
        reports.append(LayerReport(
            index=idx,
            outcome=outcome,
            pair=CalibrationPair(xhat=xhat, xtilde=xtilde, px=cfg.px),
            activation_sparsity=mask_sparsity(mask_x),
            weight_sparsity=mask_sparsity(outcome.mask_w),
            wall_time_sec=time.perf_counter() - t0,
        ))
        sparse = _activate(layer.activation, outcome.pruned_w @ xhat)

    return LayerStack(layers=pruned_layers), reports


def evaluate_dual_sparse(stack: LayerStack, x: np.ndarray, px: float) -> np.ndarray:
    """Forward pass with magnitude pruning applied to every layer input.

    Accumulation runs slab by slab in ascending index order, so per-column
    outputs match the execution simulator's spMspV kernel bit for bit.
    """
    stack.validate()
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.shape[0] != stack.input_dim:
        raise DimensionMismatch(
            f"input has {x.shape[0]} rows, stack expects {stack.input_dim}")
    cur = x
    for layer in stack.layers:
        xhat, _ = magnitude_prune_columns(cur, px)
        cur = _activate(layer.activation,
                        _kernels.gemm_seq(layer.weight, xhat))
    return cur[:, 0] if squeeze else cur


def forward_dense(stack: LayerStack, x: np.ndarray) -> np.ndarray:
    """Plain forward pass; identical to dual-sparse evaluation at px = 0."""
    return evaluate_dual_sparse(stack, x, 0.0)
