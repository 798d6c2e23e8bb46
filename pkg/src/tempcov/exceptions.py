"""Exception types raised by tempcov."""


class TempCovError(Exception):
    """Base class for all tempcov errors."""


class DimensionError(TempCovError, ValueError):
    """Array shapes do not agree."""


class NotPositiveDefinite(TempCovError, ValueError):
    """A matrix that must be positive definite is not."""


class ZeroVariance(TempCovError, ValueError):
    """A variable has zero (weighted) variance and cannot be standardized."""

    def __init__(self, message, column=None, period=None):
        super().__init__(message)
        self.column = column
        self.period = period


class DivergenceError(TempCovError, FloatingPointError):
    """The optimizer produced a non-finite objective or gradient."""

    def __init__(self, message, round=None, step=None, period=None):
        super().__init__(message)
        self.round = round
        self.step = step
        self.period = period


class CorruptModel(TempCovError, ValueError):
    """A model or matrix file could not be parsed."""


class UnsupportedVersion(TempCovError, ValueError):
    """A file was written by an unknown format version."""
