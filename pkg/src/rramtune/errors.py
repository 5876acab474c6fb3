"""Exception types raised by the simulator.

Every error raised on purpose by this package derives from RramError so
callers can catch one base class at the CLI boundary.
"""

from __future__ import annotations


class RramError(Exception):
    """Base class for all package errors."""


class InvalidConfig(RramError):
    """A parameter object or run configuration violates a documented constraint."""


class AlreadyFormed(RramError):
    """Forming pulse sent to a device that has already been formed."""


class NotFormed(RramError):
    """Operation requires a formed device but the target is still pristine."""


class WrongPulseKind(RramError):
    """Pulse kind does not match the requested device operation."""


class BadPulseWidth(RramError):
    """Pulse width violates the fixed-width rule for the operation."""


class TimeBeforeAnchor(RramError):
    """Conductance requested at a time earlier than the device's last programming op."""


class IndexOutOfRange(RramError):
    """Row or column index outside the array."""


class NegativeDt(RramError):
    """advance_time called with a negative interval."""


class SenseSaturated(RramError):
    """Sense voltage exceeded the ADC reference; reading would clip."""


class IntervalsOverlap(RramError):
    """Requested target intervals cannot be placed without overlapping."""


class FailedToConverge(RramError):
    """Programming loop hit the iteration cap. Carries the partial trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class InsufficientSamples(RramError):
    """Separability analysis needs at least 2 states with 8 samples each."""


class ParseError(RramError):
    """Config text could not be parsed. Carries the offending line number and key."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        super().__init__(message)
        self.line = line
        self.key = key


class ValidationError(RramError):
    """Config parsed but a value violates a documented constraint."""
