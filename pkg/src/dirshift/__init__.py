"""Bayesian Dirichlet ARMA modeling of compositional time series with a
gated directional shift, plus simulation, forecasting, and evaluation tools."""

from .geometry import (
    CompositionError,
    DimensionError,
    aitchison_distance,
    clr,
    close_with_floor,
    helmert_contrast,
    ilr,
    ilr_inv,
)
from .model import CovariateSet, ModelSpec, ParamSet, gate
from .sampler import PosteriorDraws, SamplerConfig, run_chains

__all__ = [
    "CompositionError",
    "DimensionError",
    "aitchison_distance",
    "clr",
    "close_with_floor",
    "helmert_contrast",
    "ilr",
    "ilr_inv",
    "CovariateSet",
    "ModelSpec",
    "ParamSet",
    "gate",
    "PosteriorDraws",
    "SamplerConfig",
    "run_chains",
]

__version__ = "0.1.0"
