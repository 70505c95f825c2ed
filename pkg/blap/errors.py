"""Exceptions raised by blap."""


class BlapError(Exception):
    """Base class for all blap errors."""


class InvalidConfigError(BlapError, ValueError):
    """A manifold, run or output parameter is out of range."""


class InvalidInputError(BlapError, ValueError):
    """A field, layout or operator does not fit the requested operation."""


class UndefinedResidualError(InvalidInputError):
    """A relative residual was requested for a zero field."""


class ContractViolation(BlapError):
    """An operator does not satisfy the contract of the callee."""


class SolverError(BlapError, RuntimeError):
    """An iterative solver did not converge.

    Attributes
    ----------
    diagnostics : dict
        Solver state at the time of failure (iterations, residuals, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
