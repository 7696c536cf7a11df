"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific class that applies.
"""


class AmtlError(Exception):
    """Base class for all package errors."""


class ShapeError(AmtlError, ValueError):
    """Operands do not conform (dimension mismatch, bad mask length, ...)."""


class VocabularyError(AmtlError, ValueError):
    """A feature-value id falls outside the declared vocabulary."""


class DatasetError(AmtlError, ValueError):
    """Malformed dataset file or inconsistent dataset metadata."""


class CheckpointError(AmtlError, ValueError):
    """Corrupt, truncated, or shape-incompatible checkpoint/store file."""


class NumericsError(AmtlError, FloatingPointError):
    """Non-finite values where finite ones are required (loss blow-up, bad grad)."""
