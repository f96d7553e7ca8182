"""Sinusoidal neural fields with weight-scaled initialization."""

from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    InvalidInputError,
    OutOfRangeError,
    ResourceError,
    ShapeError,
    SineFieldError,
    UnsupportedFormatError,
)
from .init import InitSpec, LrPlan, initialize, init_standard, init_weight_scaled
from .model import SnfParams, backward, forward, predict
from .train import TrainConfig, TrainReport, train

__version__ = "0.1.0"
