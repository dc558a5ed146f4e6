"""File formats: composition series CSV, draws CSV, and the YAML run config.

All writers go through a temp-file-plus-rename so a crashed run never leaves a
half-written artifact. Time indices are either plain integers or ISO ``YYYY-MM``
month labels; months are mapped to consecutive integers internally.
"""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import yaml

from .geometry import CompositionError, close_with_floor, validate_composition
from .model import CovariateDesign, ModelSpec, VARIANTS
from .sampler import SamplerConfig

__all__ = [
    "ValidationError",
    "SeriesData",
    "read_series",
    "write_series",
    "write_draws",
    "read_draws",
    "RunConfig",
    "read_config",
    "write_config",
    "atomic_write",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


class ValidationError(ValueError):
    """Raised when an input file violates its schema."""


def atomic_write(path: str, text: str) -> None:
    """Write text to ``path`` via a temp file in the same directory + rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_time(label: str):
    """Integer index or (year, month) tuple from a time label."""
    label = label.strip()
    m = _MONTH_RE.match(label)
    if m:
        year, month = int(m.group(1)), int(m.group(2))
        if not 1 <= month <= 12:
            raise ValidationError(f"invalid month in time label {label!r}")
        return year * 12 + (month - 1)
    try:
        return int(label)
    except ValueError:
        raise ValidationError(
            f"time label {label!r} is neither an integer nor YYYY-MM") from None


def month_index(label: str, origin_label: str) -> int:
    """1-based index of a YYYY-MM label relative to an origin label."""
    return _parse_time(label) - _parse_time(origin_label) + 1


@dataclass(frozen=True)
class SeriesData:
    """A parsed composition series: row labels, 1-based indices, and values."""

    labels: tuple[str, ...]
    times: np.ndarray        # 1-based consecutive-unit indices
    Y: np.ndarray            # (T, C)
    components: tuple[str, ...]

    @property
    def T(self) -> int:
        return self.Y.shape[0]

    @property
    def C(self) -> int:
        return self.Y.shape[1]

    def index_of(self, label) -> int:
        """Map a time label (or integer) to its 1-based index in the series."""
        if isinstance(label, (int, np.integer)):
            raw = int(label)
        else:
            raw = _parse_time(str(label))
        raw0 = _parse_time(self.labels[0])
        idx = raw - raw0 + 1
        if not 1 <= idx <= self.T:
            raise ValidationError(f"time {label!r} outside the observed range")
        return idx


def read_series(path: str) -> SeriesData:
    """Parse and validate a series CSV.

    Each data row is floored/renormalized (``close_with_floor``) and then must
    pass composition validation; time labels must be strictly increasing and
    consecutive in their unit (months or integer steps).
    """
    try:
        frame = pd.read_csv(path, dtype=str)
    except OSError:
        raise
    except Exception as exc:
        raise ValidationError(f"malformed series file {path}: {exc}") from exc
    if frame.shape[1] < 3:
        raise ValidationError("series file needs a time column plus >= 2 components")
    time_col = frame.columns[0]
    components = tuple(frame.columns[1:])
    labels = []
    raw_times = []
    rows = []
    for i, rec in enumerate(frame.itertuples(index=False), start=2):
        label = str(rec[0])
        raw_times.append(_parse_time(label))
        labels.append(label)
        try:
            vals = np.array([float(x) for x in rec[1:]])
        except (TypeError, ValueError):
            raise ValidationError(f"{path} line {i}: non-numeric composition entry") from None
        try:
            rows.append(validate_composition(close_with_floor(vals)))
        except CompositionError as exc:
            raise ValidationError(f"{path} line {i}: {exc}") from exc
    raw_times = np.asarray(raw_times)
    if len(raw_times) == 0:
        raise ValidationError(f"{path}: series file has no data rows")
    diffs = np.diff(raw_times)
    if np.any(diffs <= 0):
        bad = int(np.argmax(diffs <= 0)) + 3
        raise ValidationError(f"{path} line {bad}: time labels must be strictly increasing")
    times = raw_times - raw_times[0] + 1
    return SeriesData(labels=tuple(labels), times=times,
                      Y=np.asarray(rows), components=components)


def write_series(path: str, labels, Y: np.ndarray, components=None,
                 time_name: str = "time") -> None:
    Y = np.asarray(Y, dtype=float)
    if components is None:
        components = [f"c{i+1}" for i in range(Y.shape[1])]
    header = ",".join([time_name, *components])
    lines = [header]
    for label, row in zip(labels, Y):
        lines.append(",".join([str(label), *(format(v, ".12g") for v in row)]))
    atomic_write(path, "\n".join(lines) + "\n")


def write_draws(path: str, draws) -> None:
    """Persist posterior draws as the tabular draws CSV."""
    frame = draws.to_frame()
    atomic_write(path, frame.to_csv(index=False))


def read_draws(path: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except OSError:
        raise
    except Exception as exc:
        raise ValidationError(f"malformed draws file {path}: {exc}") from exc
    required = {"chain", "iteration", "lp", "divergent"}
    missing = required - set(frame.columns)
    if missing:
        raise ValidationError(f"draws file missing columns: {sorted(missing)}")
    return frame


@dataclass(frozen=True)
class RunConfig:
    """Declarative model-plus-run configuration loaded from YAML."""

    variant: str
    break_label: str | int | None = None
    trend: bool = True
    harmonics: tuple[int, ...] = ()
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(seed=0))
    horizon: int = 1
    out_dir: str = "."

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.variant != "baseline" and self.break_label is None:
            raise ValidationError(f"variant {self.variant!r} requires a break index")

    def design(self) -> CovariateDesign:
        return CovariateDesign(trend=self.trend, harmonics=self.harmonics)

    def model_spec(self, series: SeriesData) -> ModelSpec:
        design = self.design()
        break_index = None
        if self.break_label is not None:
            break_index = series.index_of(self.break_label)
        return ModelSpec(variant=self.variant, C=series.C, K_mean=design.K_mean,
                         K_prec=1, break_index=break_index)


_SAMPLER_KEYS = {"chains", "warmup", "draws", "seed", "target_accept", "max_tree_depth"}
_TOP_KEYS = {"schema_version", "variant", "break", "covariates", "sampler",
             "horizon", "out_dir"}
_COVARIATE_KEYS = {"trend", "harmonics"}


def read_config(path: str) -> RunConfig:
    """Load and validate a YAML run config; unknown keys are rejected."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed YAML in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(
            f"{path}: schema_version must be {SCHEMA_VERSION}, got {version!r}")
    if "variant" not in raw:
        raise ValidationError(f"{path}: missing required key 'variant'")

    cov = raw.get("covariates", {}) or {}
    if not isinstance(cov, dict) or set(cov) - _COVARIATE_KEYS:
        raise ValidationError(f"{path}: covariates accepts keys {sorted(_COVARIATE_KEYS)}")
    samp = raw.get("sampler", {}) or {}
    if not isinstance(samp, dict) or set(samp) - _SAMPLER_KEYS:
        raise ValidationError(f"{path}: sampler accepts keys {sorted(_SAMPLER_KEYS)}")
    try:
        sampler = SamplerConfig(**{"seed": 0, **samp})
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: invalid sampler settings: {exc}") from exc

    harmonics = cov.get("harmonics", []) or []
    if not isinstance(harmonics, (list, tuple)) or \
            any(not isinstance(h, int) or h < 2 for h in harmonics):
        raise ValidationError(f"{path}: harmonics must be a list of integer periods >= 2")
    try:
        return RunConfig(
            variant=raw["variant"],
            break_label=raw.get("break"),
            trend=bool(cov.get("trend", True)),
            harmonics=tuple(harmonics),
            sampler=sampler,
            horizon=int(raw.get("horizon", 1)),
            out_dir=str(raw.get("out_dir", ".")),
        )
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_config(path: str, config: RunConfig) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "variant": config.variant,
        "covariates": {"trend": config.trend, "harmonics": list(config.harmonics)},
        "sampler": {
            "chains": config.sampler.chains,
            "warmup": config.sampler.warmup,
            "draws": config.sampler.draws,
            "seed": config.sampler.seed,
            "target_accept": config.sampler.target_accept,
            "max_tree_depth": config.sampler.max_tree_depth,
        },
        "horizon": config.horizon,
        "out_dir": config.out_dir,
    }
    if config.break_label is not None:
        doc["break"] = config.break_label
    atomic_write(path, yaml.safe_dump(doc, sort_keys=False))
