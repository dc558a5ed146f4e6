"""Command-line interface: simulate / fit / forecast / study / compare.

Exit codes: 0 success, 2 validation error, 3 convergence failure, 4 I/O error.
All randomness flows from ``--seed``; rerunning a command with the same inputs
and seed writes bit-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np
import pandas as pd

from . import io as io_mod
from . import metrics as metrics_mod  # noqa: F401  (re-exported for scripts)
from .forecast import ForecastConfig, RollingPlan, forecast, forecast_summary, rolling_evaluate
from .io import RunConfig, SeriesData, ValidationError, atomic_write
from .model import ModelError, ModelSpec, VARIANTS
from .sampler import (
    InitializationError,
    PosteriorDraws,
    SamplerConfig,
    constrained_names,
    run_chains,
)
from .simulation import (
    covid_like_preset,
    scenario_grid,
    simulate_dgp,
    run_study,
    summarize_study,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4

RHAT_LIMIT = 1.01


class ConvergenceError(RuntimeError):
    pass


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _truth_frame(spec: ModelSpec, params) -> pd.DataFrame:
    from .sampler import flatten_params
    return pd.DataFrame({"parameter": constrained_names(spec),
                         "value": flatten_params(spec, params)})


# ---------------------------------------------------------------------------
# simulate

def _month_labels(T: int, start="2014-01"):
    return [str(p) for p in pd.period_range(start, periods=T, freq="M")]


def cmd_simulate(args) -> int:
    if (args.scenario is None) == (args.preset is None):
        raise ValidationError("exactly one of --scenario or --preset is required")
    if args.preset is not None:
        if args.preset != "covid-like":
            raise ValidationError(f"unknown preset {args.preset!r}")
        preset = covid_like_preset(args.seed)
        labels = [str(p) for p in preset["months"]]
        components = [f"lead{i}" for i in range(9)] + ["lead9plus"]
        io_mod.write_series(_out_path(args, "series.csv"), labels, preset["Y"],
                            components, time_name="month")
        truth = _truth_frame(preset["spec"], preset["params"])
        atomic_write(_out_path(args, "truth.csv"), truth.to_csv(index=False))
        meta = (f"preset: covid-like\nseed: {args.seed}\nbreak: 2020-02\n"
                "note: gate is zero through the break month; the first shifted "
                "month is 2020-03\ncovariates: trend + harmonics 12,6\n")
        atomic_write(_out_path(args, "truth_meta.yaml"), meta)
        return EXIT_OK
    by_name = {s.name: s for s in scenario_grid()}
    if args.scenario not in by_name:
        raise ValidationError(
            f"unknown scenario {args.scenario!r}; choose from {sorted(by_name)}")
    scenario = by_name[args.scenario]
    s_idx = sorted(by_name).index(args.scenario)
    Y, covariates, truth = simulate_dgp(
        scenario, np.random.SeedSequence((args.seed or 0, s_idx)))
    times = np.arange(1, scenario.T + 1)
    io_mod.write_series(_out_path(args, "series.csv"), times, Y)
    frame = _truth_frame(scenario.model_spec(), truth)
    atomic_write(_out_path(args, "truth.csv"), frame.to_csv(index=False))
    atomic_write(_out_path(args, "covariates.csv"),
                 pd.DataFrame({"time": times, "trend": covariates.X_mean[:, 0]})
                 .to_csv(index=False))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit

def _load_inputs(args) -> tuple[SeriesData, RunConfig, ModelSpec]:
    series = io_mod.read_series(args.data)
    config = io_mod.read_config(args.config)
    if args.seed is not None:
        config = replace(config, sampler=replace(config.sampler, seed=args.seed))
    return series, config, config.model_spec(series)


def _diagnostics_text(draws: PosteriorDraws) -> str:
    diag = draws.diagnostics()
    lines = ["parameter,rhat"]
    lines += [f"{name},{value:.6f}" for name, value in diag.rhat.items()]
    lines.append(f"divergences,{diag.divergences}")
    lines.append(f"mean_accept,{diag.mean_accept:.4f}")
    lines.append(f"max_rhat,{diag.max_rhat:.6f}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    series, config, spec = _load_inputs(args)
    covariates = config.design().build(series.T)
    draws = run_chains(spec, covariates, series.Y, config.sampler,
                       times=series.times)
    io_mod.write_draws(_out_path(args, "draws.csv"), draws)
    atomic_write(_out_path(args, "diagnostics.csv"), _diagnostics_text(draws))
    diag = draws.diagnostics()
    if diag.max_rhat >= RHAT_LIMIT and not args.no_strict:
        raise ConvergenceError(
            f"max split-rhat {diag.max_rhat:.4f} >= {RHAT_LIMIT}; "
            "rerun with more warmup/draws or pass --no-strict")
    return EXIT_OK


# ---------------------------------------------------------------------------
# forecast

def _draws_from_frame(spec: ModelSpec, frame: pd.DataFrame) -> PosteriorDraws:
    """Rebuild an in-memory PosteriorDraws from a draws file."""
    names = constrained_names(spec)
    missing = [n for n in names if n not in frame.columns]
    if missing:
        raise ValidationError(
            f"draws file lacks columns {missing[:4]}...; wrong model variant?")
    chains = int(frame["chain"].max())
    n = int(frame["iteration"].max())
    if len(frame) != chains * n:
        raise ValidationError("draws file rows do not form a full chains x draws grid")
    order = frame.sort_values(["chain", "iteration"])
    values = order[names].to_numpy().reshape(chains, n, len(names))
    lp = order["lp"].to_numpy().reshape(chains, n)
    divergent = order["divergent"].to_numpy().reshape(chains, n).astype(bool)
    dim = len(names)
    return PosteriorDraws(
        spec=spec, param_names=names, draws=values,
        unconstrained=np.zeros((chains, n, 0)), log_post=lp,
        energy_error=np.where(divergent, np.inf, 0.0),
        accept_stat=np.ones((chains, n)), tree_depth=np.zeros((chains, n), dtype=int),
        step_size=np.zeros(chains), mass_diag=np.zeros((chains, dim)))


def cmd_forecast(args) -> int:
    series, config, spec = _load_inputs(args)
    frame = io_mod.read_draws(args.draws)
    draws = _draws_from_frame(spec, frame)
    design = config.design()
    horizon = args.horizon or config.horizon
    Xm, Xp = design.extend(series.T, horizon)
    fc_config = ForecastConfig(horizon=horizon, X_mean_future=Xm, X_prec_future=Xp,
                               seed=args.seed if args.seed is not None else config.sampler.seed)
    fc = forecast(spec, draws, series.Y, design.build(series.T), fc_config,
                  times=series.times)
    summary = forecast_summary(fc, component_names=list(series.components))
    atomic_write(_out_path(args, "forecast.csv"), summary.to_csv(index=False))
    return EXIT_OK


# ---------------------------------------------------------------------------
# study

def cmd_study(args) -> int:
    grid = {s.name: s for s in scenario_grid()}
    if args.scenarios:
        unknown = set(args.scenarios) - set(grid)
        if unknown:
            raise ValidationError(f"unknown scenarios {sorted(unknown)}")
        scenarios = [grid[n] for n in args.scenarios]
    else:
        scenarios = list(grid.values())
    if args.replications < 1:
        raise ValidationError("--replications must be >= 1")
    config = SamplerConfig(chains=args.chains, warmup=args.warmup, draws=args.draws,
                           seed=args.seed or 0, target_accept=args.target_accept)
    table = run_study(scenarios, args.replications, config,
                      study_seed=args.seed or 0)
    atomic_write(_out_path(args, "study_detail.csv"), table.to_csv(index=False))
    summary = summarize_study(table)
    atomic_write(_out_path(args, "study_summary.csv"), summary.to_csv(index=False))
    errors = table[table["error"] != ""]
    if len(errors):
        atomic_write(_out_path(args, "study_failures.csv"), errors.to_csv(index=False))
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare

def cmd_compare(args) -> int:
    series = io_mod.read_series(args.data)
    config = io_mod.read_config(args.config)
    if args.seed is not None:
        config = replace(config, sampler=replace(config.sampler, seed=args.seed))
    if len(args.variants) < 2:
        raise ValidationError("compare needs at least two model variants")
    unknown = set(args.variants) - set(VARIANTS)
    if unknown:
        raise ValidationError(f"unknown variants {sorted(unknown)}")
    design = config.design()
    break_index = series.index_of(config.break_label) if config.break_label is not None else None
    specs = {}
    for variant in args.variants:
        if variant != "baseline" and break_index is None:
            raise ValidationError(f"variant {variant!r} requires `break` in the config")
        specs[variant] = ModelSpec(variant=variant, C=series.C, K_mean=design.K_mean,
                                   K_prec=1, break_index=break_index)
    origins = [series.index_of(o) for o in args.origins]
    plan = RollingPlan(origins=tuple(origins), horizons=tuple(args.horizons))
    detail, aggregate = rolling_evaluate(series.Y, specs, plan, design, config.sampler)
    atomic_write(_out_path(args, "compare_detail.csv"), detail.to_csv(index=False))
    atomic_write(_out_path(args, "compare_aggregate.csv"), aggregate.to_csv(index=False))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirshift",
        description="Dirichlet ARMA compositional time-series modeling with a "
                    "gated directional break")
    parser.add_argument("--seed", type=int, default=None,
                        help="master RNG seed (overrides config files)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for numerical backends")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--no-strict", action="store_true",
                        help="do not fail on convergence diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scenario dataset or preset")
    p.add_argument("--scenario", help="scenario name, e.g. k0.5_dneg_p0")
    p.add_argument("--preset", help="named preset: covid-like")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model by MCMC")
    p.add_argument("data", help="series CSV")
    p.add_argument("--config", required=True, help="run config YAML")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="posterior-predictive forecast from a draws file")
    p.add_argument("data", help="series CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--draws", required=True, help="draws CSV from `fit`")
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("study", help="run the simulation recovery study")
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--scenarios", nargs="*", default=None)
    p.add_argument("--chains", type=int, default=2)
    p.add_argument("--warmup", type=int, default=500)
    p.add_argument("--draws", type=int, default=500)
    p.add_argument("--target-accept", type=float, default=0.9)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("compare", help="rolling-origin comparison of model variants")
    p.add_argument("data", help="series CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--variants", nargs="+", default=list(VARIANTS))
    p.add_argument("--origins", nargs="+", required=True,
                   help="forecast origins (time labels or integers)")
    p.add_argument("--horizons", nargs="+", type=int, default=[1])
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_VALIDATION
    os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.func(args)
    except (ValidationError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except InitializationError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
