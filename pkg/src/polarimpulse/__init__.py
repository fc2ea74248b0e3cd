"""Polar codes on Middleton Class A impulsive-noise channels.

Construction by density evolution or the Bhattacharyya heuristic, successive
cancellation decoding, single-carrier and OFDM Monte Carlo simulation, and
analytic block-error bounds.
"""

from .errors import ConfigError, DimensionError, NumericalError, ParameterError
from .noise_model import ClassAParams, MixtureTerm
from .polar_codec import PolarCode

__all__ = [
    "ClassAParams",
    "ConfigError",
    "DimensionError",
    "MixtureTerm",
    "NumericalError",
    "ParameterError",
    "PolarCode",
]

__version__ = "0.1.0"
