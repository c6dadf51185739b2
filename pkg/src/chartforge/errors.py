"""Shared exception types.

Exit-code mapping used by the CLI: ConfigError/InputError and their
subclasses exit 1, TransportError/AuthError exit 2, PartialCompletion
exit 3.
"""

from __future__ import annotations


class ChartforgeError(Exception):
    """Base class for all package errors."""


class ConfigError(ChartforgeError):
    """Bad configuration value (unknown topic, invalid counts, bad plan)."""


class InputError(ChartforgeError):
    """Bad input data (missing file, unknown item id, malformed record)."""


class InvalidSpecError(ChartforgeError):
    """A chart spec failed validation; carries the violation report."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{v.field}: {v.rule}" for v in self.violations)
        super().__init__(f"invalid chart spec: {lines}")


class GenerationError(ChartforgeError):
    """Q&A generation could not find a usable target."""


class ReferenceResolutionError(ChartforgeError):
    """An item points at a chart that cannot be found."""


class ShortfallError(ChartforgeError):
    """Dataset build requested more real items than were supplied."""


class TransportError(ChartforgeError):
    """Model endpoint unreachable after exhausting retries."""

    def __init__(self, message, last_status=None):
        super().__init__(message)
        self.last_status = last_status


class AuthError(ChartforgeError):
    """Endpoint rejected credentials; never retried."""


class PartialCompletion(ChartforgeError):
    """An operation finished with partial results (e.g. distillation shortfall)."""
