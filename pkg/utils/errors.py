# utils/errors.py
"""Exception hierarchy for the bandit lab.

Every error raised on purpose by the library derives from ``CombBanditError``,
so the CLI can map it to an exit code without catching unrelated bugs.
"""
from __future__ import annotations

from typing import Optional


class CombBanditError(Exception):
    """Base class for all library errors."""


class FamilyError(CombBanditError, ValueError):
    """Invalid super-arm family, subset or bandit instance."""


class SizingError(FamilyError):
    """Family would be too large to enumerate (or m > d)."""


class DomainError(CombBanditError, ValueError):
    """Argument outside the domain of an operation."""


class ConfigError(CombBanditError, ValueError):
    """Invalid experiment configuration."""


class StateError(CombBanditError, RuntimeError):
    """Algorithm state used out of order (e.g. estimates before the horizon)."""


class DecompositionError(CombBanditError, ArithmeticError):
    """Target is not a convex combination of the family's indicator vectors."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.message = message
        self.residual = residual

    def __reduce__(self):
        return (self.__class__, (self.message, self.residual))


class ProjectionError(CombBanditError, RuntimeError):
    """KL projection did not reach the requested accuracy within its iteration cap."""

    def __init__(self, message: str, gap: float, iterations: int):
        super().__init__(f"{message} (gap={gap:.3e} after {iterations} iterations)")
        self.message = message
        self.gap = gap
        self.iterations = iterations

    def __reduce__(self):
        return (self.__class__, (self.message, self.gap, self.iterations))


class ParameterRangeError(CombBanditError, ValueError):
    """Parameter outside the range where the Pareto guarantee holds."""

    def __init__(self, warning: str):
        super().__init__(warning)
        self.warning = warning


class TrialError(CombBanditError, RuntimeError):
    """Failure inside a single trial, annotated with its index."""

    def __init__(
        self,
        message: str,
        trial_index: Optional[int] = None,
        alpha: Optional[float] = None,
        completed: Optional[list] = None,
    ):
        super().__init__(message)
        self.trial_index = trial_index
        self.alpha = alpha
        # (alpha, trial) pairs that finished before the failure
        self.completed = completed or []

    def __reduce__(self):
        return (self.__class__, (str(self), self.trial_index, self.alpha, self.completed))
