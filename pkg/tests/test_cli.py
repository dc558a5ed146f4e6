import numpy as np
import pandas as pd
import pytest

from dirshift.cli import EXIT_CONVERGENCE, EXIT_IO, EXIT_OK, EXIT_VALIDATION, main
from dirshift.io import read_draws, read_series, write_series
from dirshift.model import ModelSpec

from test_model import simulate_Y


def write_cfg(tmp_path, name="cfg.yaml", variant="baseline", break_label=None,
              chains=1, warmup=150, draws=100, seed=0, horizon=2, extra=""):
    lines = [
        "schema_version: 1",
        f"variant: {variant}",
        "covariates:",
        "  trend: true",
        "sampler:",
        f"  chains: {chains}",
        f"  warmup: {warmup}",
        f"  draws: {draws}",
        f"  seed: {seed}",
        f"horizon: {horizon}",
    ]
    if break_label is not None:
        lines.insert(2, f"break: {break_label}")
    path = tmp_path / name
    path.write_text("\n".join(lines) + extra + "\n")
    return str(path)


def small_series(tmp_path, T=30, C=3, seed=0, name="series.csv"):
    spec = ModelSpec(variant="baseline", C=C)
    Y = simulate_Y(spec, np.random.default_rng(seed), T)
    path = str(tmp_path / name)
    write_series(path, range(1, T + 1), Y)
    return path


class TestSimulate:
    def test_scenario_outputs_and_determinism(self, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        argv = ["--seed", "3", "simulate", "--scenario", "k1_dpos_p0"]
        assert main(["--out", out1] + argv) == EXIT_OK
        assert main(["--out", out2] + argv) == EXIT_OK
        for name in ("series.csv", "truth.csv", "covariates.csv"):
            assert (tmp_path / "a" / name).exists()
        assert (tmp_path / "a" / "series.csv").read_bytes() == \
            (tmp_path / "b" / "series.csv").read_bytes()
        s = read_series(str(tmp_path / "a" / "series.csv"))
        assert s.T == 120 and s.C == 5

    def test_scenario_seed_changes_data(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["--out", a, "--seed", "1", "simulate", "--scenario", "k1_dpos_p0"]) == EXIT_OK
        assert main(["--out", b, "--seed", "2", "simulate", "--scenario", "k1_dpos_p0"]) == EXIT_OK
        assert (tmp_path / "a" / "series.csv").read_bytes() != \
            (tmp_path / "b" / "series.csv").read_bytes()

    def test_preset_outputs(self, tmp_path):
        out = str(tmp_path / "p")
        assert main(["--out", out, "--seed", "0", "simulate",
                     "--preset", "covid-like"]) == EXIT_OK
        s = read_series(str(tmp_path / "p" / "series.csv"))
        assert s.T == 85 and s.C == 10
        assert s.labels[0] == "2014-01" and s.labels[-1] == "2021-01"
        assert s.components[0] == "lead0" and s.components[-1] == "lead9plus"
        truth = pd.read_csv(tmp_path / "p" / "truth.csv")
        assert {"parameter", "value"} == set(truth.columns)
        meta = (tmp_path / "p" / "truth_meta.yaml").read_text()
        assert "2020-02" in meta

    def test_requires_exactly_one_source(self, tmp_path):
        out = str(tmp_path / "x")
        assert main(["--out", out, "simulate"]) == EXIT_VALIDATION
        assert main(["--out", out, "simulate", "--scenario", "k1_dpos_p0",
                     "--preset", "covid-like"]) == EXIT_VALIDATION

    def test_unknown_scenario(self, tmp_path):
        assert main(["--out", str(tmp_path), "simulate",
                     "--scenario", "nope"]) == EXIT_VALIDATION

    def test_negative_seed(self, tmp_path):
        assert main(["--out", str(tmp_path), "--seed", "-1", "simulate",
                     "--scenario", "k1_dpos_p0"]) == EXIT_VALIDATION


class TestFitAndForecast:
    def test_fit_forecast_pipeline(self, tmp_path):
        data = small_series(tmp_path)
        cfg = write_cfg(tmp_path)
        out = str(tmp_path / "run")
        assert main(["--out", out, "--no-strict", "fit", data,
                     "--config", cfg]) == EXIT_OK
        draws_path = str(tmp_path / "run" / "draws.csv")
        frame = read_draws(draws_path)
        assert len(frame) == 100
        diag_text = (tmp_path / "run" / "diagnostics.csv").read_text()
        assert "max_rhat" in diag_text and "divergences" in diag_text

        assert main(["--out", out, "forecast", data, "--config", cfg,
                     "--draws", draws_path, "--horizon", "3"]) == EXIT_OK
        fc = pd.read_csv(tmp_path / "run" / "forecast.csv")
        assert set(fc.columns) == {"horizon", "component", "mean", "median",
                                   "q10", "q90", "lambda_hat"}
        assert sorted(fc.horizon.unique()) == [1, 2, 3]
        for h in (1, 2, 3):
            assert fc[fc.horizon == h]["mean"].sum() == pytest.approx(1.0, abs=1e-6)

    def test_fit_deterministic_output(self, tmp_path):
        data = small_series(tmp_path)
        cfg = write_cfg(tmp_path)
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (a, b):
            assert main(["--out", out, "--no-strict", "fit", data,
                         "--config", cfg]) == EXIT_OK
        assert (tmp_path / "a" / "draws.csv").read_bytes() == \
            (tmp_path / "b" / "draws.csv").read_bytes()

    def test_forecast_deterministic_output(self, tmp_path):
        data = small_series(tmp_path)
        cfg = write_cfg(tmp_path)
        out = str(tmp_path / "run")
        assert main(["--out", out, "--no-strict", "fit", data,
                     "--config", cfg]) == EXIT_OK
        draws_path = str(tmp_path / "run" / "draws.csv")
        a, b = str(tmp_path / "fa"), str(tmp_path / "fb")
        for out_dir in (a, b):
            assert main(["--out", out_dir, "forecast", data, "--config", cfg,
                         "--draws", draws_path]) == EXIT_OK
        assert (tmp_path / "fa" / "forecast.csv").read_bytes() == \
            (tmp_path / "fb" / "forecast.csv").read_bytes()

    def test_missing_data_file_is_io_error(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["--out", str(tmp_path), "fit", str(tmp_path / "nope.csv"),
                     "--config", cfg]) == EXIT_IO

    def test_bad_config_is_validation_error(self, tmp_path):
        data = small_series(tmp_path)
        bad = tmp_path / "bad.yaml"
        bad.write_text("schema_version: 1\nvariant: baseline\nbogus: 1\n")
        assert main(["--out", str(tmp_path), "fit", data,
                     "--config", str(bad)]) == EXIT_VALIDATION

    def test_wrong_variant_draws_rejected(self, tmp_path):
        data = small_series(tmp_path)
        cfg = write_cfg(tmp_path)
        out = str(tmp_path / "run")
        assert main(["--out", out, "--no-strict", "fit", data,
                     "--config", cfg]) == EXIT_OK
        # reinterpret the baseline draws under an intervention config
        cfg2 = write_cfg(tmp_path, name="cfg2.yaml", variant="intervention",
                         break_label=20)
        assert main(["--out", out, "forecast", data, "--config", cfg2,
                     "--draws", str(tmp_path / "run" / "draws.csv")]) == EXIT_VALIDATION

    def test_strict_convergence_gate(self, tmp_path, monkeypatch):
        # Force a huge rhat to verify the exit code path.
        import dirshift.cli as cli_mod

        class FakeDiag:
            max_rhat = 9.9
            divergences = 0
            mean_accept = 0.9
            rhat = {"b[0]": 9.9}

        data = small_series(tmp_path)
        cfg = write_cfg(tmp_path, warmup=60, draws=20)
        real_run = cli_mod.run_chains

        def patched(*a, **k):
            draws = real_run(*a, **k)
            monkeypatch.setattr(type(draws), "diagnostics",
                                lambda self: FakeDiag(), raising=True)
            return draws

        monkeypatch.setattr(cli_mod, "run_chains", patched)
        assert main(["--out", str(tmp_path / "s"), "fit", data,
                     "--config", cfg]) == EXIT_CONVERGENCE
        assert main(["--out", str(tmp_path / "s2"), "--no-strict", "fit", data,
                     "--config", cfg]) == EXIT_OK


class TestStudyCommand:
    def test_small_study(self, tmp_path):
        out = str(tmp_path / "study")
        assert main(["--out", out, "--seed", "0", "study",
                     "--scenarios", "k1_dpos_p0", "--replications", "1",
                     "--chains", "1", "--warmup", "150", "--draws", "100"]) == EXIT_OK
        detail = pd.read_csv(tmp_path / "study" / "study_detail.csv")
        summary = pd.read_csv(tmp_path / "study" / "study_summary.csv")
        assert len(detail) == 1
        assert detail.iloc[0]["scenario"] == "k1_dpos_p0"
        assert list(summary["scenario"]) == ["k1_dpos_p0", "overall"]

    def test_unknown_scenarios(self, tmp_path):
        assert main(["--out", str(tmp_path), "study",
                     "--scenarios", "nope"]) == EXIT_VALIDATION

    def test_bad_replications(self, tmp_path):
        assert main(["--out", str(tmp_path), "study",
                     "--replications", "0"]) == EXIT_VALIDATION


class TestCompareCommand:
    def test_needs_two_variants(self, tmp_path):
        data = small_series(tmp_path)
        cfg = write_cfg(tmp_path)
        assert main(["--out", str(tmp_path), "compare", data, "--config", cfg,
                     "--variants", "baseline", "--origins", "29"]) == EXIT_VALIDATION

    def test_break_required(self, tmp_path):
        data = small_series(tmp_path)
        cfg = write_cfg(tmp_path)  # baseline config without a break
        assert main(["--out", str(tmp_path), "compare", data, "--config", cfg,
                     "--variants", "baseline", "fixed_effect",
                     "--origins", "29"]) == EXIT_VALIDATION

    def test_two_model_comparison(self, tmp_path):
        data = small_series(tmp_path)
        cfg = write_cfg(tmp_path, variant="intervention", break_label=20)
        out = str(tmp_path / "cmp")
        assert main(["--out", out, "compare", data, "--config", cfg,
                     "--variants", "baseline", "fixed_effect",
                     "--origins", "29", "--horizons", "1"]) == EXIT_OK
        detail = pd.read_csv(tmp_path / "cmp" / "compare_detail.csv")
        agg = pd.read_csv(tmp_path / "cmp" / "compare_aggregate.csv")
        scored = detail[detail["model"].notna() & (detail["model"] != "")]
        assert set(scored["model"]) == {"baseline", "fixed_effect"}
        assert np.all(np.isfinite(scored["aitchison"]))
        assert len(agg) >= 2
