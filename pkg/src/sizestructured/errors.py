"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`SizeStructuredError`, so callers (and the CLI) can separate
model/configuration problems from numerical failures.
"""
from __future__ import annotations


class SizeStructuredError(Exception):
    """Base class for all library errors."""


class ConfigError(SizeStructuredError):
    """Malformed configuration, expression or parameter table."""


class HypothesisError(SizeStructuredError):
    """Model ingredients violate a structural hypothesis or lack metadata."""


class NumericalError(SizeStructuredError):
    """A numerical kernel failed (non-finite values, blow-up, non-convergence)."""


class ReversedIntervalError(NumericalError):
    """Quadrature called with a > b."""


class GridTooCoarseError(NumericalError):
    """The discrete implicit diagonal of the renewal march is singular."""


class BracketError(NumericalError):
    """No sign change on the requested bracket."""


class BoundaryRootError(NumericalError):
    """A root sits on (or very near) the contour of a rectangle."""


class ConvergenceError(NumericalError):
    """A fixed-point or Newton iteration failed to converge."""

    def __init__(self, message: str, residual_history: list[float] | None = None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class SpanError(NumericalError):
    """A computation needs data outside the span of a trajectory or grid."""


class FlowBelowBirthSize(SpanError):
    """Backward size flow reached the birth size before the requested time."""

    def __init__(self, message: str, hitting_time: float):
        super().__init__(message)
        self.hitting_time = hitting_time


class TailBudgetError(NumericalError):
    """A truncated tail carries more weighted mass than the tolerance allows."""


class DomainError(NumericalError):
    """Argument outside the domain where a transform is integrable."""
