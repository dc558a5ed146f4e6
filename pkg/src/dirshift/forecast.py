"""Posterior-predictive forecasting and rolling-origin evaluation.

Forecasts propagate each posterior draw's own dynamics: the in-sample state
(last ILR observation, drift, residual) seeds the recursion, future gate
values come from that draw's (tau, kappa), and each step samples a Dirichlet
observation that feeds back into the next step's ARMA terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.special import expit

from .geometry import close_with_floor, helmert_contrast, ilr, ilr_inv
from .model import CovariateDesign, CovariateSet, ModelSpec
from .sampler import PosteriorDraws, SamplerConfig, run_chains
from . import metrics as metrics_mod

__all__ = [
    "ForecastConfig",
    "ForecastDraws",
    "forecast",
    "forecast_summary",
    "RollingPlan",
    "rolling_evaluate",
    "MIN_TRAIN_POINTS",
]

MIN_TRAIN_POINTS = 24


@dataclass(frozen=True)
class ForecastConfig:
    """Forecast horizon plus the future covariate rows it requires."""

    horizon: int
    X_mean_future: np.ndarray  # (H, K_mean)
    X_prec_future: np.ndarray  # (H, K_prec)
    paths_per_draw: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        Xm = np.atleast_2d(np.asarray(self.X_mean_future, dtype=float))
        Xp = np.atleast_2d(np.asarray(self.X_prec_future, dtype=float))
        if Xm.shape[0] != self.horizon or Xp.shape[0] != self.horizon:
            raise ValueError(
                f"future covariates must have {self.horizon} rows, "
                f"got {Xm.shape[0]} and {Xp.shape[0]}")
        object.__setattr__(self, "X_mean_future", Xm)
        object.__setattr__(self, "X_prec_future", Xp)


@dataclass(frozen=True)
class ForecastDraws:
    """Predictive trajectories: (M, H, C) samples with their means and concentrations."""

    Y: np.ndarray    # (M, H, C) sampled compositions
    mu: np.ndarray   # (M, H, C) conditional mean compositions
    lam: np.ndarray  # (M, H)
    gate: np.ndarray  # (M, H) gate values (zero for non-intervention variants)

    @property
    def horizon(self) -> int:
        return self.Y.shape[1]


def _drift_paths(spec: ModelSpec, draws: PosteriorDraws, X_mean, X_prec, times):
    """(M, T, D) drift and (M, T) log-concentration paths for given rows."""
    S = draws.stacked()
    names = draws.param_names
    col = lambda n: S[:, names.index(n)]
    blk = draws.block
    M = S.shape[0]
    T = X_prec.shape[0]
    D = spec.D
    times = np.asarray(times, dtype=float)

    d = np.broadcast_to(blk("b")[:, None, :], (M, T, D)).copy()
    if spec.K_mean:
        B = blk("B").reshape(M, D, spec.K_mean)
        d += np.einsum("tk,mdk->mtd", X_mean, B)
    log_lam = np.einsum("tk,mk->mt", X_prec, blk("gamma"))
    w = np.zeros((M, T))
    if spec.variant == "intervention":
        tau, kappa = col("tau")[:, None], col("kappa")[:, None]
        tt = times[None, :]
        w = expit(kappa * (tt - tau)) * (-np.expm1(-kappa * (tt - spec.break_index)))
        w = np.where(tt <= spec.break_index, 0.0, w)
        d += col("Delta")[:, None, None] * w[:, :, None] * blk("v")[:, None, :]
        log_lam = log_lam + col("delta_phi")[:, None] * w
    elif spec.variant == "fixed_effect":
        step = (times > spec.break_index).astype(float)
        d += step[None, :, None] * blk("beta_covid")[:, None, :]
    return d, log_lam, w


def _insample_tail(spec: ModelSpec, draws: PosteriorDraws, covariates: CovariateSet,
                   Z: np.ndarray, times):
    """Per-draw (d_T, e_T) after running the recursion over the history."""
    d, _, _ = _drift_paths(spec, draws, covariates.X_mean, covariates.X_prec, times)
    r = Z[None, :, :] - d
    A, Th = draws.block("A"), draws.block("Theta")
    e = r[:, 0]
    for t in range(1, Z.shape[0]):
        e = r[:, t] - A * r[:, t - 1] - Th * e
    return d[:, -1], e


def forecast(spec: ModelSpec, draws: PosteriorDraws, Y_hist: np.ndarray,
             covariates: CovariateSet, config: ForecastConfig,
             times: np.ndarray | None = None) -> ForecastDraws:
    """Sample predictive trajectories for horizons 1..H.

    ``times`` are the observed time indices (default 1..T); future steps
    continue at T+1..T+H and feed the gate and any step dummy.
    """
    Y_hist = np.asarray(Y_hist, dtype=float)
    T = Y_hist.shape[0]
    if covariates.T != T:
        raise ValueError(f"covariates have {covariates.T} rows, history has {T}")
    if times is None:
        times = np.arange(1, T + 1)
    times = np.asarray(times, dtype=float)
    Z = ilr(Y_hist)
    H = config.horizon
    future_times = times[-1] + np.arange(1, H + 1)

    d_last, e_last = _insample_tail(spec, draws, covariates, Z, times)
    d_fut, log_lam_fut, w_fut = _drift_paths(
        spec, draws, config.X_mean_future, config.X_prec_future, future_times)
    lam_fut = np.exp(log_lam_fut)

    S = draws.stacked()
    M = S.shape[0]
    A, Th = draws.block("A"), draws.block("Theta")
    V = helmert_contrast(spec.C)
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0xF0C)))

    R = config.paths_per_draw
    Yout = np.empty((M * R, H, spec.C))
    mu_out = np.empty((M * R, H, spec.C))
    lam_rep = np.repeat(lam_fut, R, axis=0)
    d_prev = np.repeat(d_last, R, axis=0)
    Z_prev = np.broadcast_to(Z[-1], (M * R, spec.D)).copy()
    e_prev = np.repeat(e_last, R, axis=0)
    A_rep, Th_rep = np.repeat(A, R, axis=0), np.repeat(Th, R, axis=0)
    d_fut_rep = np.repeat(d_fut, R, axis=0)

    for h in range(H):
        eta = d_fut_rep[:, h] + A_rep * (Z_prev - d_prev) + Th_rep * e_prev
        mu = ilr_inv(eta)
        alpha = lam_rep[:, h:h + 1] * mu
        # Dirichlet sampling via normalized gammas, vectorized over draws.
        g = rng.standard_gamma(np.maximum(alpha, 1e-12))
        Ystar = close_with_floor(g)
        Zstar = ilr(Ystar)
        Yout[:, h] = Ystar
        mu_out[:, h] = mu
        e_prev = Zstar - eta
        d_prev = d_fut_rep[:, h]
        Z_prev = Zstar
    return ForecastDraws(Y=Yout, mu=mu_out, lam=np.repeat(lam_fut, R, axis=0),
                         gate=np.repeat(w_fut, R, axis=0))


def forecast_summary(fc: ForecastDraws, component_names=None) -> pd.DataFrame:
    """Per-horizon, per-component predictive summary table.

    ``mean`` is the renormalized mean of the per-draw conditional means;
    ``median``/``q10``/``q90`` are quantiles of the sampled compositions.
    """
    H, C = fc.Y.shape[1], fc.Y.shape[2]
    if component_names is None:
        component_names = [f"c{i+1}" for i in range(C)]
    rows = []
    for h in range(H):
        mu_hat = fc.mu[:, h].mean(axis=0)
        mu_hat = mu_hat / mu_hat.sum()
        q10, med, q90 = np.quantile(fc.Y[:, h], [0.10, 0.50, 0.90], axis=0)
        for c in range(C):
            rows.append({"horizon": h + 1, "component": component_names[c],
                         "mean": mu_hat[c], "median": med[c],
                         "q10": q10[c], "q90": q90[c],
                         "lambda_hat": fc.lam[:, h].mean()})
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class RollingPlan:
    """Forecast origins (1-based time indices) and horizons to evaluate.

    For each origin o the models are trained on observations 1..o-1; horizon h
    targets observation o+h-1.
    """

    origins: tuple[int, ...]
    horizons: tuple[int, ...] = (1,)

    def __post_init__(self):
        if not self.origins:
            raise ValueError("plan needs at least one origin")
        if any(h < 1 for h in self.horizons) or not self.horizons:
            raise ValueError("horizons must be >= 1")
        object.__setattr__(self, "origins", tuple(int(o) for o in self.origins))
        object.__setattr__(self, "horizons", tuple(sorted(set(int(h) for h in self.horizons))))


def rolling_evaluate(Y: np.ndarray, specs: dict[str, ModelSpec], plan: RollingPlan,
                     design: CovariateDesign, config: SamplerConfig,
                     pairwise: str = "unbiased") -> tuple[pd.DataFrame, pd.DataFrame]:
    """Fit each model at each origin and score forecasts on observed targets.

    Returns ``(detail, aggregate)``: one row per (model, origin, horizon) with
    the five metrics, and the per-(model, horizon) means. Origins with fewer
    than ``MIN_TRAIN_POINTS`` training rows are skipped with a notice row in
    the detail table; unobserved targets are silently not evaluated.
    """
    Y = np.asarray(Y, dtype=float)
    T = Y.shape[0]
    rows = []
    for origin in plan.origins:
        T_train = origin - 1
        if T_train < MIN_TRAIN_POINTS:
            rows.append({"model": "", "origin": origin, "horizon": 0,
                         "skipped": f"training window {T_train} < {MIN_TRAIN_POINTS}"})
            continue
        max_h = max(h for h in plan.horizons if T_train + h <= T) \
            if any(T_train + h <= T for h in plan.horizons) else 0
        if max_h == 0:
            continue
        Y_train = Y[:T_train]
        covariates = design.build(T_train)
        Xm_fut, Xp_fut = design.extend(T_train, max_h)
        for name, spec in specs.items():
            draws = run_chains(spec, covariates, Y_train, config)
            fc_cfg = ForecastConfig(horizon=max_h, X_mean_future=Xm_fut,
                                    X_prec_future=Xp_fut, seed=config.seed)
            fc = forecast(spec, draws, Y_train, covariates, fc_cfg)
            for h in plan.horizons:
                if T_train + h > T:
                    continue
                y_obs = Y[T_train + h - 1]
                mu_hat = fc.mu[:, h - 1].mean(axis=0)
                mu_hat = mu_hat / mu_hat.sum()
                lam_hat = float(fc.lam[:, h - 1].mean())
                rows.append({
                    "model": name, "origin": origin, "horizon": h, "skipped": "",
                    "aitchison": metrics_mod.aitchison_point(mu_hat, y_obs),
                    "energy": metrics_mod.energy_score(fc.Y[:, h - 1], y_obs, pairwise),
                    "log_score": metrics_mod.plugin_log_score(mu_hat, lam_hat, y_obs),
                    "coverage": metrics_mod.componentwise_coverage(fc.Y[:, h - 1], y_obs),
                    "mae": metrics_mod.mae(mu_hat, y_obs),
                    "max_rhat": draws.diagnostics().max_rhat,
                    "divergences": int(draws.divergent().sum()),
                })
    detail = pd.DataFrame(rows)
    scored = detail[(detail.get("model", "") != "") & (detail.get("skipped", "") == "")] \
        if len(detail) else detail
    if len(scored):
        aggregate = (scored.groupby(["model", "horizon"], sort=True)
                     [["aitchison", "energy", "log_score", "coverage", "mae"]]
                     .agg(["mean", "count"]).reset_index())
    else:
        aggregate = pd.DataFrame()
    return detail, aggregate
