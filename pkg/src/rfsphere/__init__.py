"""Simulation laboratory for the mean-field spherical model in random fields."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    DisorderSample,
    FieldScaling,
    ModelParams,
    Regime,
    classify_regime,
    compute_sample_stats,
    evaluate_observables,
)
from .sampler import ChainConfig, sample_gibbs  # noqa: F401
from .walks import FieldDistributionSpec, generate_disorder, walk_path  # noqa: F401
