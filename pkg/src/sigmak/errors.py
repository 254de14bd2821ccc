"""Exception hierarchy shared by every module."""

from __future__ import annotations

from typing import Any


class SigmaKError(Exception):
    """Base class for all library errors."""


class InvalidInputError(SigmaKError, ValueError):
    pass


class InvalidIndexError(InvalidInputError):
    pass


class DegenerateInputError(InvalidInputError):
    pass


class DomainError(SigmaKError, ValueError):
    pass


class ContextInvalidError(SigmaKError, ValueError):
    """Raised when K is below the regime where c_{k,K} is positive."""


class ModeRangeError(SigmaKError, OverflowError):
    pass


class SamplingError(SigmaKError, RuntimeError):
    """Rejection budget exhausted; ``stats`` carries accept-rate diagnostics."""

    def __init__(self, message: str, stats: dict[str, Any] | None = None):
        super().__init__(message)
        self.stats = dict(stats or {})


class ExhaustionError(SamplingError):
    pass
