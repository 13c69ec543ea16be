"""Exceptions raised by the hybrid level-set estimator."""

from __future__ import annotations


class LevelSetError(Exception):
    """Base class for every error raised by this package."""

    pass


class EmptyInputError(LevelSetError):
    """Raised when an operation receives an empty point set."""

    pass


class DegenerateGeometryError(LevelSetError):
    """Raised when a geometric construction needs non-collinear generators."""

    pass


class BandwidthSelectionError(LevelSetError):
    """Raised when the sample cannot support least-squares cross-validation."""

    pass


class InvalidBracketError(LevelSetError):
    """Raised when the dichotomy bracket does not start on the empty side."""

    pass


class EmptyLevelSetError(LevelSetError):
    """Raised when no sample point clears the upper threshold."""

    pass


class CalibrationError(LevelSetError):
    """Raised when the bootstrap calibration cannot select a grid cell."""

    pass


class ConfigError(LevelSetError):
    """Raised for invalid or unknown configuration values."""

    pass


class IngestError(LevelSetError):
    """Raised when an input file cannot be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ReportSchemaError(LevelSetError):
    """Raised when a report file was written by an incompatible schema version."""

    def __init__(self, message: str, found_version: object = None):
        self.found_version = found_version
        super().__init__(message)
