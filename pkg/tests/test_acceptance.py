"""Release acceptance gate: nine criteria, one test (one pass/fail line) each.

Criteria 6 and 7 refit many models and dominate the runtime (roughly an hour
on one core); everything else completes in a few minutes. Tolerances are
stated inline next to each assertion.
"""

import time

import numpy as np
import pytest

from dirshift.forecast import RollingPlan, rolling_evaluate
from dirshift.geometry import (
    aitchison_distance,
    close_with_floor,
    helmert_contrast,
    ilr,
    ilr_inv,
)
from dirshift.metrics import energy_score, mae, plugin_log_score
from dirshift.model import (
    CovariateSet,
    ModelSpec,
    ParamSet,
    gate,
    grad_log_posterior,
    log_posterior,
)
from dirshift.sampler import SamplerConfig, run_chains
from dirshift.simulation import (
    covid_like_preset,
    run_study,
    scenario_grid,
    simulate_series,
    summarize_study,
)
from dirshift import transforms
from dirshift.target import make_target

from test_model import make_params, simulate_Y


def test_criterion_1_geometry_properties_1000_cases_under_10s():
    rng = np.random.default_rng(0)
    t0 = time.time()

    # round trip: ilr_inv(ilr(y)) == y at 1e-12
    for C in (3, 5, 8):
        Y = rng.dirichlet(np.full(C, 2.0), size=1000)
        assert np.allclose(ilr_inv(ilr(Y)), Y, atol=1e-12)

    # isometry: Aitchison distance equals the ILR Euclidean distance at 1e-10
    for C in (3, 6):
        X1 = rng.dirichlet(np.full(C, 2.0), size=1000)
        X2 = rng.dirichlet(np.full(C, 2.0), size=1000)
        for x, y in zip(X1, X2):
            assert abs(aitchison_distance(x, y)
                       - np.linalg.norm(ilr(x) - ilr(y))) < 1e-10

    # geodesic additivity along log-ratio lines at 1e-8
    for _ in range(1000):
        z0 = rng.normal(size=4)
        u = rng.normal(size=4)
        u /= np.linalg.norm(u)
        a, b = sorted(rng.uniform(-2, 2, size=2))
        c = b + rng.uniform(0, 2)
        p = [ilr_inv(z0 + t * u) for t in (a, b, c)]
        assert abs(aitchison_distance(p[0], p[1]) + aitchison_distance(p[1], p[2])
                   - aitchison_distance(p[0], p[2])) < 1e-8

    # basis invariance: any orthonormal contrast gives the same composition
    V = helmert_contrast(5)
    for _ in range(1000):
        R, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        z = rng.normal(size=4)
        assert np.allclose(ilr_inv(z, V), ilr_inv(R.T @ z, V @ R), atol=1e-10)

    assert time.time() - t0 < 10.0


def test_criterion_2_gate_oracle_values():
    # High-precision evaluations of the gate's closed form (50-digit mpmath;
    # the product and ratio forms agree to all digits). Note the second value
    # rounds to 0.170003, not 0.170005 — a misprint sometimes quoted for this
    # curve; the frozen values below are the true ones.
    assert gate(62, 62.0, 1.0, 60) == pytest.approx(0.43233235838169365, abs=1e-10)
    assert gate(61, 62.0, 1.0, 60) == pytest.approx(0.17000340156854792, abs=1e-10)
    # exactly zero through the break time
    t = np.arange(1, 61)
    assert np.all(gate(t, 62.0, 1.0, 60) == 0.0)
    assert gate(60, 62.0, 1.0, 60) == 0.0


def test_criterion_3_gradient_matches_finite_differences_20_points():
    t0 = time.time()
    rng = np.random.default_rng(42)
    variants = ["intervention"] * 12 + ["baseline"] * 4 + ["fixed_effect"] * 4
    for variant in variants:
        spec = ModelSpec(variant=variant, C=4, K_mean=1,
                         break_index=None if variant == "baseline" else 15)
        params = make_params(spec, rng)
        T = 30
        X_mean = (np.arange(1, T + 1) / T)[:, None]
        cov = CovariateSet(X_mean=X_mean, X_prec=np.ones((T, 1)))
        Y = simulate_Y(spec, rng, T)
        u0 = transforms.unconstrain(spec, params)
        g = grad_log_posterior(spec, params, cov, Y)
        tgt = make_target(spec, cov, Y)
        eps = 1e-5
        for j in range(u0.size):
            up, um = u0.copy(), u0.copy()
            up[j] += eps
            um[j] -= eps
            fd = (tgt.log_density(up) - tgt.log_density(um)) / (2 * eps)
            denom = max(abs(fd), abs(g[j]), 1e-6 / 1e-4)  # 1e-6 absolute floor
            assert abs(g[j] - fd) / denom < 1e-4, \
                f"{variant} coordinate {j}: analytic {g[j]}, fd {fd}"
    assert time.time() - t0 < 60.0


def test_criterion_4_sign_symmetry_exact_100_points():
    rng = np.random.default_rng(11)
    spec = ModelSpec(variant="intervention", C=4, K_mean=1, break_index=15)
    T = 30
    cov = CovariateSet(X_mean=(np.arange(1, T + 1) / T)[:, None],
                       X_prec=np.ones((T, 1)))
    Y = simulate_Y(spec, rng, T)
    import dataclasses
    for _ in range(100):
        p = make_params(spec, rng)
        q = dataclasses.replace(p, Delta=-p.Delta, v_raw=-np.asarray(p.v_raw))
        lp_p = log_posterior(spec, p, cov, Y)
        lp_q = log_posterior(spec, q, cov, Y)
        assert lp_p == lp_q  # exact floating-point equality


def test_criterion_5_sampler_prior_moments_and_clean_fit():
    # (a) prior-only sampling: Delta ~ N(0, 1.5), log kappa ~ N(-0.5, 1.0)
    # moments within 5% on 10,000 draws.
    spec0 = ModelSpec(variant="intervention", C=4, K_mean=0, K_prec=1,
                      break_index=10)
    cfg0 = SamplerConfig(chains=4, warmup=500, draws=2500, seed=11,
                         target_accept=0.9)
    prior = run_chains(spec0, CovariateSet.empty(0), np.zeros((0, 4)), cfg0)
    delta = prior.column("Delta")
    log_kappa = np.log(prior.column("kappa"))
    assert abs(delta.mean()) < 0.05 * 1.5
    assert abs(delta.std() - 1.5) / 1.5 < 0.05
    assert abs(log_kappa.mean() - (-0.5)) < 0.05 * 1.0
    assert abs(log_kappa.std() - 1.0) / 1.0 < 0.05

    # (b) well-specified C=4, T=80 fit: all split-rhat < 1.01, 0 divergences.
    C, T, ell = 4, 80, 40
    spec = ModelSpec(variant="intervention", C=C, K_mean=1, K_prec=1,
                     break_index=ell)
    cov = CovariateSet(X_mean=(np.arange(1, T + 1) / T)[:, None],
                       X_prec=np.ones((T, 1)))
    truth = ParamSet(
        b=np.array([0.3, -0.2, 0.1]),
        B=np.array([[0.2], [-0.1], [0.15]]),
        A_diag=np.array([0.5, 0.4, 0.45]),
        Theta_diag=np.array([0.2, 0.15, 0.25]),
        gamma=np.array([np.log(200.0)]),
        Delta=0.6, tau=42.0, kappa=1.0,
        v_raw=np.array([0.8, -0.5, 0.33]), delta_phi=0.2,
    )
    Y = simulate_series(spec, truth, cov, np.random.default_rng(7))
    cfg = SamplerConfig(chains=4, warmup=1500, draws=2000, seed=11,
                        target_accept=0.99)
    draws = run_chains(spec, cov, Y, cfg)
    diag = draws.diagnostics()
    assert diag.max_rhat < 1.01, f"max rhat {diag.max_rhat}"
    assert int(draws.divergent().sum()) == 0


def test_criterion_6_desk_scale_recovery_study():
    # 8 scenarios x 10 replications. Aggregate bars: conditional |Delta bias|
    # <= 0.10, conditional mean cosine >= 0.85, conditional |tau bias| <= 1.5,
    # per-scenario coverage in [0.70, 0.90], unconditional recovery >= 0.60.
    cfg = SamplerConfig(chains=2, warmup=500, draws=500, seed=0,
                        target_accept=0.9)
    table = run_study(scenario_grid(), replications=10, config=cfg, study_seed=0)
    assert (table["error"] == "").all(), table.loc[table["error"] != "", "error"].tolist()
    summary = summarize_study(table)
    overall = summary[summary.scenario == "overall"].iloc[0]
    per_scenario = summary[summary.scenario != "overall"]
    assert abs(overall["delta_bias"]) <= 0.10, overall["delta_bias"]
    assert overall["cosine"] >= 0.85, overall["cosine"]
    assert abs(overall["tau_bias"]) <= 1.5, overall["tau_bias"]
    assert overall["recovery_rate"] >= 0.60, overall["recovery_rate"]
    for _, row in per_scenario.iterrows():
        assert 0.70 <= row["coverage"] <= 0.90, \
            f"{row['scenario']}: coverage {row['coverage']}"


def test_criterion_7_break_benchmark_ranking():
    # Five synthetic break panels: h=1 mean Aitchison error must rank
    # intervention <= fixed_effect <= baseline; intervention componentwise
    # coverage in [0.75, 0.95]; baseline coverage below 0.65.
    frames = []
    for seed in (1, 2, 3, 4, 5):
        preset = covid_like_preset(seed)
        spec_i = preset["spec"]
        specs = {
            "intervention": spec_i,
            "fixed_effect": ModelSpec(variant="fixed_effect", C=spec_i.C,
                                      K_mean=spec_i.K_mean, K_prec=1,
                                      break_index=spec_i.break_index),
            "baseline": ModelSpec(variant="baseline", C=spec_i.C,
                                  K_mean=spec_i.K_mean, K_prec=1),
        }
        cfg = SamplerConfig(chains=2, warmup=400, draws=400, seed=100 + seed,
                            target_accept=0.9)
        detail, _ = rolling_evaluate(preset["Y"], specs,
                                     RollingPlan(origins=(78, 81, 84)),
                                     preset["design"], cfg)
        frames.append(detail[(detail.model != "") & (detail.skipped == "")])
    import pandas as pd
    scored = pd.concat(frames, ignore_index=True)
    by_model = scored.groupby("model")[["aitchison", "coverage"]].mean()
    a_int = by_model.loc["intervention", "aitchison"]
    a_fix = by_model.loc["fixed_effect", "aitchison"]
    a_base = by_model.loc["baseline", "aitchison"]
    assert a_int <= a_fix <= a_base, (a_int, a_fix, a_base)
    cov_int = by_model.loc["intervention", "coverage"]
    cov_base = by_model.loc["baseline", "coverage"]
    assert 0.75 <= cov_int <= 0.95, cov_int
    assert cov_base < 0.65, cov_base


def test_criterion_8_metric_oracles():
    # plug-in log score of the uniform 3-part Dirichlet (alpha = (1,1,1)) is
    # log Gamma(3) = ln 2 at any y
    y = np.array([0.1, 0.2, 0.7])
    assert plugin_log_score(np.full(3, 1 / 3), 3.0, y) == \
        pytest.approx(np.log(2.0), abs=1e-10)
    # degenerate predictive has zero energy score
    draws = np.tile(y, (10, 1))
    assert energy_score(draws, y) == pytest.approx(0.0, abs=1e-10)
    # MAE hand example
    assert mae(np.array([0.5, 0.5]), np.array([0.6, 0.4])) == \
        pytest.approx(0.1, abs=1e-10)


def test_criterion_9_bit_identical_reruns(tmp_path):
    from dirshift.cli import EXIT_OK, main

    # simulate twice with the same seed
    sim_a, sim_b = str(tmp_path / "sa"), str(tmp_path / "sb")
    for out in (sim_a, sim_b):
        assert main(["--out", out, "--seed", "3", "simulate",
                     "--scenario", "k0.5_dneg_p0"]) == EXIT_OK
    for name in ("series.csv", "truth.csv", "covariates.csv"):
        assert (tmp_path / "sa" / name).read_bytes() == \
            (tmp_path / "sb" / name).read_bytes(), name

    # fit twice on the same data/config/seed
    data = str(tmp_path / "sa" / "series.csv")
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("schema_version: 1\nvariant: intervention\nbreak: 60\n"
                   "sampler:\n  chains: 2\n  warmup: 200\n  draws: 150\n"
                   "  seed: 5\n")
    fit_a, fit_b = str(tmp_path / "fa"), str(tmp_path / "fb")
    for out in (fit_a, fit_b):
        assert main(["--out", out, "--no-strict", "fit", data,
                     "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "fa" / "draws.csv").read_bytes() == \
        (tmp_path / "fb" / "draws.csv").read_bytes()
    assert (tmp_path / "fa" / "diagnostics.csv").read_bytes() == \
        (tmp_path / "fb" / "diagnostics.csv").read_bytes()
