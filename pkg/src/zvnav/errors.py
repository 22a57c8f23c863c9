"""Error types shared across the library.

The three categories below map onto distinct CLI exit codes (see
``zvnav.cli``), so new errors should subclass one of them rather than
``ZvnavError`` directly.
"""

from __future__ import annotations


class ZvnavError(Exception):
    """Base class for all library errors."""


class InputFormatError(ZvnavError, ValueError):
    """Malformed input data: bad CSV layout, broken timestamps, missing labels."""


class StreamFormatError(InputFormatError):
    """An IMU stream violates the timing or layout contract.

    ``index`` is the first offending sample, when known.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class CalibrationDataError(InputFormatError):
    """A calibration sample set is empty or labels are missing."""


class ConfigError(ZvnavError):
    """A configuration value is out of range or inconsistent."""


class NumericalError(ZvnavError):
    """A numerical operation failed (singular matrix, degenerate window)."""


class DegenerateWindowError(NumericalError):
    """Window-mean accelerometer vector has zero norm; no gravity direction."""
