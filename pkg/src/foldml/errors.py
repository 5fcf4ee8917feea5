"""Exception types shared across the library."""


class DimensionError(ValueError):
    """Shapes or dimensions of inputs do not line up."""


class DataError(ValueError):
    """Input data violates a documented precondition (bad labels, missing
    columns, empty input, ...)."""


class NumericError(ArithmeticError):
    """Non-finite values or otherwise numerically invalid input."""


class NotPSDError(NumericError):
    """A matrix that must be positive semi-definite has a clearly negative
    eigenvalue."""


class PerfectSeparationError(RuntimeError):
    """The logistic MLE does not exist; coefficients diverge."""


class DivergenceError(RuntimeError):
    """An SGD update produced non-finite values."""

    def __init__(self, message, epoch=None, alpha=None):
        super().__init__(message)
        self.epoch = epoch
        self.alpha = alpha


class SizingError(ValueError):
    """A requested workload does not fit in available memory."""


class IterationError(RuntimeError):
    """A driver-loop step failed; carries the ledger built so far."""

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger
