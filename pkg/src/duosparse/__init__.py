"""duosparse: dual weight/activation sparsity calibration and simulation.

A layerwise one-shot pruning toolkit that calibrates unstructured weight
sparsity against magnitude-pruned (sparse) activations while correcting
toward the dense model's outputs, plus an exact reference solver and a
spMspV execution-cost simulator for the resulting dual-sparse GEMV
workloads.
"""

from ._kernels import BACKEND
from .calibrator import (Precomputed, PruneConfig, PruneOutcome, precompute,
                         prune_layer, reconstruction_error, score_block)
from .errors import (BadMagic, DimensionMismatch, DuoSparseError,
                     InfeasibleSparsity, MalformedCsr, ManifestError,
                     MatrixFileError, NonFiniteValue, NotPositiveDefinite,
                     SingularPivot, TooLargeForOracle, TruncatedPayload,
                     UnsupportedVersion)
from .io import (gen_calibration, read_mask, read_matrix, read_matrix_header,
                 read_stack, write_matrix, write_stack)
from .linalg import (CholeskyState, cholesky_lower, dampen, eliminate_inverse,
                     invert_spd)
from .oracle import (RowPruneTrace, duo_loss_and_update, exact_score_column,
                     prune_row_exact)
from .pipeline import (CalibrationPair, Layer, LayerReport, LayerStack,
                       calibrate_stack, evaluate_dual_sparse, forward_dense)
from .simulator import (CsrWeights, ExecCounters, skew_report, spmspv,
                        sram_load_fraction)
from .sparsity import (apply_weight_mask, magnitude_prune_columns,
                       magnitude_prune_vector, mask_sparsity, round_half_up)

__version__ = "0.1.0"
