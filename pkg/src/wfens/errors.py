"""Exception and warning types shared across the package."""


class WfensError(Exception):
    """Base class for all package errors."""


class DimensionError(WfensError, ValueError):
    """Operand shapes do not match."""


class DomainError(WfensError, ValueError):
    """A physical parameter lies outside its declared domain."""


class IntegrationError(WfensError, ArithmeticError):
    """Propagation produced non-finite values."""


class InsufficientOverlapError(WfensError, ValueError):
    """Forward and reverse histograms share too few populated bins."""


class ConvergenceWarning(UserWarning):
    """A Markov chain failed its convergence diagnostic."""
