"""Discrete-modulated CV-QKD key rates: solver, data generation, surrogate."""

from .channel import FEATURE_LENGTH, ProtocolParams, assemble_features, ec_terms
from .solver import KeyRateReport, SolveOptions, key_rate

__all__ = [
    "FEATURE_LENGTH",
    "ProtocolParams",
    "assemble_features",
    "ec_terms",
    "KeyRateReport",
    "SolveOptions",
    "key_rate",
]

__version__ = "0.1.0"
