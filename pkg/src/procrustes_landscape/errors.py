"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class LandscapeError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LandscapeError, ValueError):
    """An argument lies outside the domain of a function."""


class PoleError(DomainError):
    """The secular function was evaluated at one of its poles."""


class SingularityError(LandscapeError, ArithmeticError):
    """A linear solve hit a singular shift (lambda equal to an eigenvalue)."""


class BracketError(LandscapeError, ValueError):
    """The supplied interval does not bracket a sign change."""


class AccuracyError(LandscapeError, ArithmeticError):
    """An iterative method stopped before meeting its tolerance.

    The best available estimate is kept on ``best_estimate`` (and the error
    estimate, when known, on ``error_estimate``).
    """

    def __init__(self, message: str, best_estimate=None, error_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate


class DivergenceError(LandscapeError, ArithmeticError):
    """A quantity is infinite for the requested parameters."""


class DegenerateParameterError(DomainError):
    """Parameters sit exactly on a degenerate limit of a formula."""


class DegenerateInstanceError(LandscapeError):
    """A random instance hit a probability-zero degeneracy."""

    def __init__(self, message: str, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class ConsistencyError(LandscapeError):
    """An internal invariant (root parity, loss ordering, ...) failed."""


class NumericError(LandscapeError):
    """A linear-algebra kernel failed to converge."""


class ConfigError(LandscapeError, ValueError):
    """Invalid experiment configuration."""
