"""Forecast evaluation metrics on the simplex.

All distances are Aitchison (CLR-space Euclidean); interval endpoints use
type-7 empirical quantiles, which matters for coverage and is therefore fixed
here rather than configurable.
"""

from __future__ import annotations

import numpy as np

from .geometry import DimensionError, aitchison_distance, clr
from .model import dirichlet_log_pdf

__all__ = [
    "aitchison_point",
    "energy_score",
    "plugin_log_score",
    "componentwise_coverage",
    "mae",
]


def aitchison_point(mu_hat, y) -> float:
    """Aitchison distance between the point forecast and the observation."""
    return aitchison_distance(mu_hat, y)


def energy_score(draws, y, pairwise: str = "unbiased") -> float:
    """Energy score of a predictive sample under the Aitchison metric.

    ES = mean_m d(Y_m, y) - (1/2) * E d(Y_m, Y_m'), with the second expectation
    estimated either without the diagonal (``"unbiased"``, divisor M(M-1)) or
    including it (``"plugin"``, divisor M^2).
    """
    draws = np.asarray(draws, dtype=float)
    y = np.asarray(y, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 2:
        raise ValueError("need at least 2 predictive draws")
    if draws.shape[1] != y.size:
        raise DimensionError(f"draws have {draws.shape[1]} parts, observation has {y.size}")
    if pairwise not in ("unbiased", "plugin"):
        raise ValueError(f"unknown pairwise estimator {pairwise!r}")
    Zd = clr(draws)
    M = draws.shape[0]
    term1 = float(np.mean(np.linalg.norm(Zd - clr(y)[None, :], axis=1)))
    diffs = np.linalg.norm(Zd[:, None, :] - Zd[None, :, :], axis=-1)
    total = float(diffs.sum())  # diagonal contributes zero
    denom = M * (M - 1) if pairwise == "unbiased" else M * M
    return term1 - 0.5 * total / denom


def plugin_log_score(mu_hat, lambda_hat: float, y) -> float:
    """Dirichlet log density at y under the plug-in parameters λ̂·μ̂."""
    mu_hat = np.asarray(mu_hat, dtype=float)
    if lambda_hat <= 0:
        raise ValueError(f"lambda_hat must be positive, got {lambda_hat}")
    return dirichlet_log_pdf(y, lambda_hat * mu_hat)


def componentwise_coverage(draws, y, level: float = 0.8) -> float:
    """Fraction of components whose observation falls in the central interval.

    Intervals are type-7 empirical quantiles of the predictive draws at
    (1-level)/2 and 1-(1-level)/2 per component.
    """
    draws = np.asarray(draws, dtype=float)
    y = np.asarray(y, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 1:
        raise ValueError("need a (M, C) array of predictive draws")
    if draws.shape[1] != y.size:
        raise DimensionError(f"draws have {draws.shape[1]} parts, observation has {y.size}")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [tail, 1.0 - tail], axis=0)  # type-7 default
    return float(np.mean((y >= lo) & (y <= hi)))


def mae(mu_hat, y) -> float:
    """Mean absolute error over components and forecast cases.

    Accepts single compositions or aligned (n, C) arrays.
    """
    mu_hat = np.atleast_2d(np.asarray(mu_hat, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if mu_hat.shape != y.shape:
        raise DimensionError(f"shape mismatch: {mu_hat.shape} vs {y.shape}")
    return float(np.mean(np.abs(mu_hat - y)))
