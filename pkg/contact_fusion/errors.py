# contact_fusion/errors.py
"""
Exception hierarchy shared by every component.

Each exception class carries the process exit code the CLI returns when it
escapes a command, so scripts can tell configuration problems from model,
input and I/O failures.
"""

from typing import Any, Optional


class ContactFusionError(Exception):
    """Base class for all errors raised by contact_fusion."""
    exit_code: int = 1


class ConfigError(ContactFusionError):
    """Invalid configuration, dimensions or calibration data."""
    exit_code = 2

    def __init__(self, message: str, field_errors: Optional[list[str]] = None):
        self.field_errors = field_errors or []
        if self.field_errors:
            message = message + "\n  " + "\n  ".join(self.field_errors)
        super().__init__(message)


class ModelError(ContactFusionError):
    """The physical model cannot be built or evaluated."""
    exit_code = 3


class SceneError(ModelError):
    """Scene geometry is inconsistent (camera inside the membrane volume, object below the clamp)."""


class StrainRangeError(ModelError):
    """A strain target cannot be reached before the object passes below the clamp plane."""


class MeasurementError(ModelError):
    """A dot-grid measurement is incomplete."""

    def __init__(self, message: str, index: Optional[tuple[int, int]] = None):
        self.index = index
        super().__init__(message)


class SolverError(ModelError):
    """A QP solve did not converge; carries residual diagnostics."""

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message} (diagnostics: {self.diagnostics})")


class DataError(ModelError):
    """Input data is insufficient for the requested estimate."""


class MetricError(ModelError):
    """A metric was asked to score empty point sets."""


class MissingInputError(ContactFusionError):
    """A required input file is missing."""
    exit_code = 4

    def __init__(self, path: Any):
        self.path = path
        super().__init__(f"Missing input file: {path}")


class OutputError(ContactFusionError):
    """Outputs could not be written."""
    exit_code = 5
