"""Exception hierarchy shared by all modules."""


class BCMError(Exception):
    """Base class for library errors."""


class DomainError(BCMError, ValueError):
    """Input outside the mathematical domain of an operation."""


class IllConditionedError(DomainError):
    """Matrix too ill-conditioned for a stable inverse."""


class ConvergenceError(BCMError):
    """An iterative solver hit its iteration budget.

    Attributes
    ----------
    residual : float
        Last value of the convergence criterion.
    best : object
        Best (or last) iterate, when the solver has one to offer.
    """

    def __init__(self, message, residual=float("nan"), best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class ConfigError(BCMError, ValueError):
    """Invalid run configuration."""
