"""Exception and warning types shared across the package."""


class QsmoothError(Exception):
    """Base class for all package-specific errors."""


class ModelError(QsmoothError, ValueError):
    """Invalid model specification (negative intensity, non-PSD matrix, ...)."""


class DimensionMismatchError(QsmoothError, ValueError):
    """Operands with incompatible shapes, dimensions or grids."""


class StepSizeError(QsmoothError, ValueError):
    """Time step violates an explicit-stability or event-probability bound."""


class ImpossibleEventError(QsmoothError, ValueError):
    """A click was observed on a channel whose expected intensity is zero."""


class DegenerateRecordError(QsmoothError, ValueError):
    """Forward and backward densities have zero overlap; smoothing undefined."""


class ConditioningError(QsmoothError, ValueError):
    """A deconvolution kernel is numerically singular for the requested setup."""


class NumericError(QsmoothError, RuntimeError):
    """Computation produced non-finite values or lost positive-definiteness."""


class SchemaError(QsmoothError, ValueError):
    """A run configuration failed validation."""


class ModelValidityWarning(UserWarning):
    """An approximation regime flag is violated; results may be biased."""
