"""Exception types shared across the package."""

from __future__ import annotations


class RangeNavError(Exception):
    """Base class for all rangenav-specific errors."""


class InvalidDragError(RangeNavError):
    """Drag coefficients incompatible with the sampling period."""


class DegeneratePositionError(RangeNavError):
    """Position too close to the ranging anchor to define a direction."""


class InconsistentWindowError(RangeNavError):
    """Measurement window arrays disagree with the configured sizes."""


class SolverError(RangeNavError):
    """Normal matrix numerically singular; solve aborted."""


class AnchorCollisionError(RangeNavError):
    """Trajectory passes through the ranging anchor."""


class DataError(RangeNavError):
    """Base class for dataset / trace file problems."""


class ParseError(DataError):
    """Malformed file content. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotoneTimeError(DataError):
    """Timestamps are not strictly increasing."""


class ConfigError(RangeNavError):
    """Unknown key, wrong type, or invalid value in a config file."""
