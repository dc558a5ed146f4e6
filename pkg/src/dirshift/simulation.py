"""Simulation harness: scenario grid, data generation, and recovery metrics.

The scenario grid crosses gate speed, shift sign, and precision shift at fixed
dimensions (C=5, T=120, break at 60). Each replication draws its own nuisance
parameters (intercepts, trend loadings, AR/MA diagonals, shift direction), so
recovery statistics average over DGP heterogeneity rather than one fixed truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .geometry import close_with_floor, helmert_contrast, ilr_inv
from .model import (
    ARMA_BOUND,
    CovariateDesign,
    CovariateSet,
    ModelSpec,
    ParamSet,
    build_state,
    gate,
)
from .sampler import PosteriorDraws, SamplerConfig, run_chains

__all__ = [
    "ScenarioSpec",
    "scenario_grid",
    "draw_truth",
    "simulate_series",
    "simulate_dgp",
    "posterior_mu_paths",
    "recovery_metrics",
    "run_study",
    "summarize_study",
    "covid_like_preset",
    "COVID_PRESET_MONTHS",
]

# Direction-recovery thresholds: the headline one (angular error under 60
# degrees) and a stricter sensitivity check.
RECOVERY_THRESHOLD = 0.5
STRICT_THRESHOLD = 0.9

SD_INTERCEPT = 0.5
SD_TREND = 0.3
SD_AR = 0.25
SD_MA = 0.20


@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of the simulation grid."""

    name: str
    kappa_true: float
    delta_true: float
    delta_phi_true: float
    C: int = 5
    T: int = 120
    ell: int = 60
    tau_true: float = 62.0
    lambda_base: float = 100.0

    def model_spec(self) -> ModelSpec:
        return ModelSpec(variant="intervention", C=self.C, K_mean=1, K_prec=1,
                         break_index=self.ell)


def scenario_grid() -> list[ScenarioSpec]:
    """The eight-cell grid: kappa x sign(Delta) x precision shift."""
    out = []
    for kappa in (0.5, 1.0):
        for delta in (-0.6, 0.6):
            for dphi in (0.0, 0.3):
                sign = "dneg" if delta < 0 else "dpos"
                name = f"k{kappa:g}_{sign}_p{dphi:g}"
                out.append(ScenarioSpec(name=name, kappa_true=kappa,
                                        delta_true=delta, delta_phi_true=dphi))
    return out


def _truncated_normal(rng: np.random.Generator, sd: float, size: int,
                      bound: float = ARMA_BOUND) -> np.ndarray:
    """N(0, sd^2) draws rejected outside (-bound, bound)."""
    out = rng.normal(0.0, sd, size=size)
    while True:
        bad = np.abs(out) >= bound
        if not bad.any():
            return out
        out[bad] = rng.normal(0.0, sd, size=int(bad.sum()))


def draw_truth(scenario: ScenarioSpec, rng: np.random.Generator) -> ParamSet:
    """Sample the per-replication true parameters for one scenario cell."""
    D = scenario.C - 1
    v = rng.normal(size=D)
    v /= np.linalg.norm(v)
    if v[0] < 0:
        v = -v
    return ParamSet(
        b=rng.normal(0.0, SD_INTERCEPT, size=D),
        B=rng.normal(0.0, SD_TREND, size=(D, 1)),
        A_diag=_truncated_normal(rng, SD_AR, D),
        Theta_diag=_truncated_normal(rng, SD_MA, D),
        gamma=np.array([np.log(scenario.lambda_base)]),
        Delta=scenario.delta_true,
        tau=scenario.tau_true,
        kappa=scenario.kappa_true,
        v_raw=v,
        delta_phi=scenario.delta_phi_true,
    )


def simulate_series(spec: ModelSpec, params: ParamSet, covariates: CovariateSet,
                    rng: np.random.Generator,
                    times: np.ndarray | None = None) -> np.ndarray:
    """Generate a (T, C) composition series by running the recursion forward.

    The conditional mean at time t depends on the realized Z_{t-1}, so the
    series is built sequentially; each observation is Dirichlet with that
    draw's concentration, floored away from exact zero.
    """
    from .geometry import ilr  # local to avoid cycle at import time

    T = covariates.T
    if times is None:
        times = np.arange(1, T + 1)
    times = np.asarray(times, dtype=float)
    D = spec.D
    d = params.b[None, :] + covariates.X_mean @ params.B.T
    log_lam = covariates.X_prec @ params.gamma
    if spec.variant == "intervention":
        w = gate(times, params.tau, params.kappa, spec.break_index)
        d = d + params.Delta * w[:, None] * params.v[None, :]
        log_lam = log_lam + params.delta_phi * w
    elif spec.variant == "fixed_effect":
        step = (times > spec.break_index).astype(float)
        d = d + step[:, None] * params.beta_covid[None, :]
    lam = np.exp(log_lam)

    Y = np.empty((T, spec.C))
    Z = np.empty((T, D))
    e_prev = np.zeros(D)
    for t in range(T):
        if t == 0:
            eta = d[0]
        else:
            eta = d[t] + params.A_diag * (Z[t - 1] - d[t - 1]) + params.Theta_diag * e_prev
        mu = ilr_inv(eta)
        Y[t] = close_with_floor(rng.dirichlet(lam[t] * mu))
        Z[t] = ilr(Y[t])
        e_prev = Z[t] - eta
    return Y


def simulate_dgp(scenario: ScenarioSpec,
                 replication_seed) -> tuple[np.ndarray, CovariateSet, ParamSet]:
    """One scenario replication: (Y series, covariates, true ParamSet)."""
    rng = np.random.default_rng(replication_seed)
    truth = draw_truth(scenario, rng)
    covariates = CovariateDesign(trend=True).build(scenario.T)
    Y = simulate_series(scenario.model_spec(), truth, covariates, rng)
    return Y, covariates, truth


def posterior_mu_paths(spec: ModelSpec, draws: PosteriorDraws,
                       covariates: CovariateSet, Y: np.ndarray,
                       times: np.ndarray | None = None) -> np.ndarray:
    """(M, T, C) conditional-mean composition paths, one per posterior draw.

    Vectorized over draws: the elementwise ARMA recursion runs once over t with
    all draws in the leading axis.
    """
    from .geometry import ilr

    Y = np.asarray(Y, dtype=float)
    T = Y.shape[0]
    if times is None:
        times = np.arange(1, T + 1)
    times = np.asarray(times, dtype=float)
    Z = ilr(Y)
    S = draws.stacked()
    names = draws.param_names
    col = lambda n: S[:, names.index(n)]
    blk = lambda p: draws.block(p)
    M = S.shape[0]
    D = spec.D

    b = blk("b")                              # (M, D)
    d = b[:, None, :] + np.zeros((M, T, D))
    if spec.K_mean:
        B = blk("B").reshape(M, D, spec.K_mean)
        d = d + np.einsum("tk,mdk->mtd", covariates.X_mean, B)
    log_lam = np.einsum("tk,mk->mt", covariates.X_prec, blk("gamma"))
    if spec.variant == "intervention":
        tau, kappa = col("tau"), col("kappa")
        from scipy.special import expit
        tt = times[None, :]
        w = expit(kappa[:, None] * (tt - tau[:, None])) * \
            (-np.expm1(-kappa[:, None] * (tt - spec.break_index)))
        w = np.where(tt <= spec.break_index, 0.0, w)
        v = blk("v")
        d = d + col("Delta")[:, None, None] * w[:, :, None] * v[:, None, :]
        log_lam = log_lam + col("delta_phi")[:, None] * w
    elif spec.variant == "fixed_effect":
        step = (times > spec.break_index).astype(float)
        d = d + step[None, :, None] * blk("beta_covid")[:, None, :]

    r = Z[None, :, :] - d
    A, Th = blk("A"), blk("Theta")
    e = np.empty_like(r)
    e[:, 0] = r[:, 0]
    for t in range(1, T):
        e[:, t] = r[:, t] - A * r[:, t - 1] - Th * e[:, t - 1]
    eta = Z[None, :, :] - e
    return ilr_inv(eta)


def recovery_metrics(spec: ModelSpec, truth: ParamSet, draws: PosteriorDraws,
                     covariates: CovariateSet, Y: np.ndarray,
                     times: np.ndarray | None = None) -> dict:
    """Per-fit recovery record: direction cosine, biases, coverage, diagnostics."""
    v_hat = draws.block("v").mean(axis=0)
    v_hat /= np.linalg.norm(v_hat)
    cosine = float(v_hat @ truth.v)
    delta_hat = float(draws.column("Delta").mean())
    tau_hat = float(draws.column("tau").mean())

    mu_draws = posterior_mu_paths(spec, draws, covariates, Y, times)
    lo, hi = np.quantile(mu_draws, [0.10, 0.90], axis=0)
    true_state = build_state(spec, truth, covariates, _ilr_of(Y), times)
    mu_true = true_state.mu
    coverage = float(np.mean((mu_true >= lo) & (mu_true <= hi)))

    diag = draws.diagnostics()
    return {
        "cosine": cosine,
        "delta_hat": delta_hat,
        "delta_bias": delta_hat - truth.Delta,
        "tau_hat": tau_hat,
        "tau_bias": tau_hat - truth.tau,
        "coverage": coverage,
        "max_rhat": diag.max_rhat,
        "divergences": int(draws.divergent().sum()),
        "converged": bool(diag.converged()),
        "recovered": cosine > RECOVERY_THRESHOLD,
        "recovered_strict": cosine > STRICT_THRESHOLD,
    }


def _ilr_of(Y):
    from .geometry import ilr
    return ilr(np.asarray(Y, dtype=float))


def run_study(scenarios: list[ScenarioSpec], replications: int,
              config: SamplerConfig, study_seed: int = 0) -> pd.DataFrame:
    """Fit every (scenario, replication) cell; one row of recovery metrics each.

    Replication seeds derive from (study_seed, scenario index, rep), so any
    cell can be reproduced in isolation. Individual fit failures are recorded
    as rows with ``error`` set instead of aborting the study.
    """
    rows = []
    for s_idx, scenario in enumerate(scenarios):
        spec = scenario.model_spec()
        for rep in range(replications):
            seed = np.random.SeedSequence((study_seed, s_idx, rep))
            Y, covariates, truth = simulate_dgp(scenario, seed)
            fit_seed = int(seed.generate_state(1)[0] >> 1)
            row = {"scenario": scenario.name, "rep": rep,
                   "delta_true": scenario.delta_true, "tau_true": scenario.tau_true,
                   "kappa_true": scenario.kappa_true, "error": ""}
            try:
                draws = run_chains(spec, covariates, Y,
                                   replace(config, seed=fit_seed))
                row.update(recovery_metrics(spec, truth, draws, covariates, Y))
            except Exception as exc:  # recorded, not fatal
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return pd.DataFrame(rows)


def summarize_study(table: pd.DataFrame) -> pd.DataFrame:
    """Per-scenario aggregates (plus an overall row) in the report layout.

    Bias and cosine columns are conditional on direction recovery
    (cosine > 0.5); coverage and the recovery-rate columns are unconditional.
    """
    ok = table[table["error"] == ""].copy()

    def agg(group: pd.DataFrame, label: str) -> dict:
        rec = group[group["recovered"]]
        return {
            "scenario": label,
            "n": len(group),
            "n_recovered": len(rec),
            "recovery_rate": rec.shape[0] / max(len(group), 1),
            "recovery_rate_strict": group["recovered_strict"].mean() if len(group) else np.nan,
            "delta_bias": rec["delta_bias"].mean() if len(rec) else np.nan,
            "cosine": rec["cosine"].mean() if len(rec) else np.nan,
            "tau_bias": rec["tau_bias"].mean() if len(rec) else np.nan,
            "coverage": group["coverage"].mean() if len(group) else np.nan,
            "converged_rate": group["converged"].mean() if len(group) else np.nan,
        }

    rows = [agg(g, name) for name, g in ok.groupby("scenario", sort=True)]
    rows.append(agg(ok, "overall"))
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# COVID-like preset: a synthetic monthly booking-composition panel with a
# known disruption. Ten lead-time buckets, monthly 2014-01..2021-01,
# disruption from 2020-02 shifting mass toward the short lead-time buckets.

COVID_PRESET_MONTHS = pd.period_range("2014-01", "2021-01", freq="M")
_COVID_ELL = 74  # 2020-02 is row 74; the gate turns on from 2020-03


def covid_like_preset(seed: int = 0) -> dict:
    """Synthetic C=10 monthly panel with a published ground truth.

    Returns a dict with the series (``Y``, ``months``), the model pieces
    (``spec``, ``covariates``, ``design``), and the true ``params``.
    """
    rng = np.random.default_rng(np.random.SeedSequence((20200201, seed)))
    C, D = 10, 9
    T = len(COVID_PRESET_MONTHS)
    design = CovariateDesign(trend=True, harmonics=(12, 6))
    covariates = design.build(T)
    spec = ModelSpec(variant="intervention", C=C, K_mean=design.K_mean,
                     K_prec=1, break_index=_COVID_ELL)

    # Pre-break mean composition decays with lead time; the disruption pushes
    # mass toward the shortest buckets. The CLR pattern maps into ILR space
    # through the contrast matrix.
    V = helmert_contrast(C)
    base = np.linspace(1.4, -1.4, C)
    b = V.T @ (base - base.mean())
    clr_shift = np.linspace(1.0, -1.0, C) ** 3
    clr_shift -= clr_shift.mean()
    v = V.T @ clr_shift
    v /= np.linalg.norm(v)

    B = np.zeros((D, design.K_mean))
    B[:, 0] = rng.normal(0.0, 0.2, size=D)            # trend loadings
    B[:, 1:] = rng.normal(0.0, 0.08, size=(D, design.K_mean - 1))  # seasonality
    truth = ParamSet(
        b=b, B=B,
        A_diag=_truncated_normal(rng, 0.2, D),
        Theta_diag=_truncated_normal(rng, 0.15, D),
        gamma=np.array([np.log(300.0)]),
        Delta=1.4, tau=float(_COVID_ELL + 2), kappa=0.5,
        v_raw=v, delta_phi=-0.3,
    )
    Y = simulate_series(spec, truth, covariates, rng)
    return {"Y": Y, "months": COVID_PRESET_MONTHS, "spec": spec,
            "covariates": covariates, "design": design, "params": truth}
