"""
Exception hierarchy shared by every app.

Library code raises these; management commands map them to exit codes.
"""
from typing import Any, Optional

from django.core.exceptions import ImproperlyConfigured


class DisturbanceLabError(Exception):
    """Base class for all errors raised by disturbance_lab."""


class ConfigurationError(DisturbanceLabError, ImproperlyConfigured):
    """Invalid parameter, bound, density or config key."""


class DimensionError(DisturbanceLabError, ValueError):
    """A vector or matrix has the wrong shape."""


class SeriesMismatchError(DisturbanceLabError, ValueError):
    """Two time series do not share a grid or a length."""


class GridValidationError(DisturbanceLabError, ValueError):
    """An ingested series is not uniformly sampled or lacks channels."""


class HorizonError(DisturbanceLabError, IndexError):
    """A sampled signal was queried outside the time span it covers."""


class NumericalError(DisturbanceLabError, ArithmeticError):
    """A numerical procedure failed; ``last_iterate`` holds its final state."""

    def __init__(self, message: str, last_iterate: Optional[Any] = None):
        super().__init__(message)
        self.last_iterate = last_iterate


class RegularizationRequiredError(NumericalError):
    """The normal matrix is singular and no ridge penalty was given."""


class ZeroRadiusError(NumericalError):
    """A matrix with zero spectral radius cannot be rescaled."""


class DivergenceError(NumericalError):
    """A trajectory left the finite range at ``step``."""

    def __init__(self, message: str, step: int, last_iterate: Optional[Any] = None):
        super().__init__(message, last_iterate=last_iterate)
        self.step = step


class UntrainedReadoutError(DisturbanceLabError, RuntimeError):
    """Inference was requested before the readout was fitted."""


class UndefinedMetricError(DisturbanceLabError, ArithmeticError):
    """A metric is undefined for the given data (e.g. zero-variance truth)."""
