"""Extinction times of the birth-death process with weak competition."""
from .errors import (
    CapExceeded,
    DivergenceError,
    ParameterError,
    RegimeError,
    RejectionBudgetExceeded,
)
from .model import ModelParams, Regime, WeightTable, birth_rate, build_weights, carrying_capacity, death_rate

__all__ = [
    "CapExceeded",
    "DivergenceError",
    "ModelParams",
    "ParameterError",
    "Regime",
    "RegimeError",
    "RejectionBudgetExceeded",
    "WeightTable",
    "birth_rate",
    "build_weights",
    "carrying_capacity",
    "death_rate",
]

__version__ = "0.1.0"
