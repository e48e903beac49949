"""Exception hierarchy for the forward-curve engine.

Every exception carries the process exit code the command-line front end
reports for it.
"""
from typing import Optional


class HestonForwardsError(Exception):
    """Base class for all engine errors."""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigurationError(HestonForwardsError):
    """Invalid configuration: grid mismatch, off-grid shift, unknown keys."""

    exit_code = 2


class ArgumentError(HestonForwardsError):
    """Invalid argument value such as a non-positive delivery length."""

    exit_code = 2


class EligibilityError(HestonForwardsError):
    """Payoff not differentiable enough for the requested estimator."""

    exit_code = 2


class DomainError(HestonForwardsError):
    """Attempt to read a curve beyond its trustworthy samples."""


class DataError(HestonForwardsError):
    """Non-finite values in curve samples or results."""


class DegeneracyError(HestonForwardsError):
    """Near-singular Gram matrix."""


class CoverageError(HestonForwardsError):
    """Randomized parameter falls outside the interpolation grid too often."""
