"""Gaussian copula regression for clustered discrete responses.

Rectangle-probability engines, exact/simulated and jittered likelihoods,
quasi-Newton estimation, asymptotic-limit analysis and simulation tools.
"""
from .errors import (ConfigError, CopregError, DataError, DegenerateIntervalError, DomainError,
                     NotPositiveDefiniteError, NumericalError, UnsupportedStructureError,
                     ValidationError)
from .marginals import MarginalFamily, MarginalParams
from .correlation import CorrelationStructure, StructureKind
from .rectprob import Engine, ProbEstimate, Rectangle, RqmcConfig
from .likelihood import Cluster, Dataset, JitterSet, ModelParams, ModelSpec

__version__ = "0.1.0"

__all__ = [
    "Cluster", "ConfigError", "CopregError", "CorrelationStructure", "DataError", "Dataset",
    "DegenerateIntervalError", "DomainError", "Engine", "JitterSet", "MarginalFamily",
    "MarginalParams", "ModelParams", "ModelSpec", "NotPositiveDefiniteError", "NumericalError",
    "ProbEstimate", "Rectangle", "RqmcConfig", "StructureKind", "UnsupportedStructureError",
    "ValidationError",
]
