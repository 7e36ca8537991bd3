"""Exception types raised by the solver library."""


class PSCAError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(PSCAError, ValueError):
    """An argument violates a documented precondition."""


class UnsupportedOperationError(PSCAError):
    """The problem does not expose the structure an operation needs."""


class ConvergenceError(PSCAError):
    """An inner iterative solve hit its iteration cap.

    The last optimality residual is kept in ``residual`` and, when the
    failure happened inside a block solve, the block in ``block``.
    """

    def __init__(self, message, residual, block=None):
        super().__init__(message)
        self.residual = residual
        self.block = block


class NumericalFailureError(PSCAError):
    """The objective became non-finite; ``trace`` holds the records so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InconsistentOptimumError(PSCAError, ValueError):
    """A supplied optimal value lies above observed objective values."""
