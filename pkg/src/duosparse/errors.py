"""Exception hierarchy shared by all duosparse modules."""


class DuoSparseError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DuoSparseError):
    """Operands have incompatible shapes."""


class NotPositiveDefinite(DuoSparseError):
    """Cholesky factorization hit a non-positive pivot.

    Callers performing calibration should retry with a larger dampening
    ratio before giving up.
    """


class SingularPivot(DuoSparseError):
    """A diagonal pivot is too close to zero to divide by."""


class InfeasibleSparsity(DuoSparseError):
    """Requested sparsity level cannot be realized on the given shape."""


class TooLargeForOracle(DuoSparseError):
    """Problem size exceeds what the exact reference solver will accept."""


class MatrixFileError(DuoSparseError):
    """Base class for binary matrix container problems."""


class BadMagic(MatrixFileError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(MatrixFileError):
    """Container version is not one this reader understands."""


class TruncatedPayload(MatrixFileError):
    """Payload is shorter than the header promises."""


class NonFiniteValue(MatrixFileError):
    """A NaN or Inf was found where only finite values are allowed."""


class MalformedCsr(DuoSparseError):
    """Compressed-row structure violates its invariants."""


class ManifestError(MatrixFileError):
    """Stack manifest is missing, inconsistent, or references bad files."""
