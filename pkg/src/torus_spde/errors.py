"""Exception hierarchy shared by the package and the CLI exit-code mapping."""

from __future__ import annotations


class TorusSPDEError(Exception):
    """Base class for all package errors."""


class ConfigError(TorusSPDEError, ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class GridMismatchError(ConfigError):
    """Two fields or increments live on different grids."""


class UnsupportedDimensionError(ConfigError):
    """Operation is only defined for a particular dimension."""


class DomainError(TorusSPDEError, ValueError):
    """Argument outside the mathematical domain of a function."""


class NumericalError(TorusSPDEError, ArithmeticError):
    """Non-finite values, singular factors or failed convergence (exit code 3)."""


class SymmetryError(NumericalError):
    """Spectral data that should represent a real field is not Hermitian."""


class SingularFactorError(NumericalError, ConfigError):
    """An implicit time-stepping factor vanishes for some mode."""


class EnsembleError(NumericalError):
    """One or more realizations of an ensemble failed."""

    def __init__(self, message: str, failures: list | None = None):
        super().__init__(message)
        self.failures = failures or []


class ArtifactIOError(TorusSPDEError, OSError):
    """Reading or writing an artifact failed (exit code 4)."""


class AxisMismatchError(ConfigError):
    """A prediction curve shares no abscissa with the measured data."""
