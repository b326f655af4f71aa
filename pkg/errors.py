"""
Exception hierarchy for the magnetic flow laboratory.

Every failure raised by the numerical layer derives from MagflowError so the
command-line front end can map it to an exit code and a JSON error record.
"""
from typing import Optional


class MagflowError(Exception):
    """Base class for all laboratory errors."""

    exit_code = 3

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.message = message
        self.residual = residual

    def to_record(self) -> dict:
        """Serializable description used on standard error."""
        record = {"error": type(self).__name__, "message": self.message}
        if self.residual is not None:
            record["residual"] = float(self.residual)
        return record


class ConfigError(MagflowError):
    """Malformed model file, vector string, grid string or flag."""

    exit_code = 2


class ModelError(MagflowError):
    """A surface model failed pinching or generator-invariance validation."""

    exit_code = 2


class DomainError(MagflowError):
    """A point lies outside the chart (y <= 0 or non-finite)."""


class IntegrationError(MagflowError):
    r"""Raised when the ODE integrator fails (step underflow, non-finite state)."""


class ConvergenceError(MagflowError):
    """An iterative solver stopped without meeting its tolerance.

    The best residual reached is kept on ``residual``.
    """


class PreconditionError(MagflowError):
    """Inputs violate the precondition of an operation."""


class ExportError(MagflowError):
    """Results could not be written."""
