"""Dirichlet ARMA model variants with a directional-shift break mechanism.

Three variants share the same ILR-space drift/recursion skeleton:

* ``baseline``      -- drift is intercept + covariates only.
* ``fixed_effect``  -- adds a per-dimension step shift after the break index.
* ``intervention``  -- adds a gated shift ``Delta * w_t(tau, kappa) * v`` along a
  unit direction, plus an optional precision shift ``delta_phi * w_t``.

All functions here are pure numpy; the JAX mirror used by the sampler lives in
``dirshift.target`` and is cross-checked against this module in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, gammaln

from .geometry import DimensionError, helmert_contrast, ilr, ilr_inv

__all__ = [
    "VARIANTS",
    "ModelSpec",
    "ParamSet",
    "CovariateSet",
    "CovariateDesign",
    "SeriesState",
    "gate",
    "direction",
    "clr_direction",
    "build_state",
    "dirichlet_log_pdf",
    "log_prior",
    "log_posterior",
    "grad_log_posterior",
]

VARIANTS = ("baseline", "fixed_effect", "intervention")

# Stationarity/invertibility bound for the diagonal AR/MA coefficients.
ARMA_BOUND = 0.99
# Dirichlet parameters below this are rejected (log density -inf), not clamped.
ALPHA_FLOOR = 1e-10

# Prior scales (constrained space).
PRIOR_SD_B = 2.5
PRIOR_SD_COEF = 1.0
PRIOR_SD_DELTA = 1.5
PRIOR_SD_TAU = 4.0
PRIOR_TAU_OFFSET = 2.0  # prior mean of tau is ell + 2
PRIOR_KAPPA_LOGMEAN = -0.5
PRIOR_KAPPA_LOGSD = 1.0
PRIOR_SD_DELTA_PHI = 0.5


class ModelError(ValueError):
    """Raised for invalid model specifications or parameter values."""


@dataclass(frozen=True)
class ModelSpec:
    """Model variant plus dimensions. AR and MA orders are fixed at one (diagonal)."""

    variant: str
    C: int
    K_mean: int = 0
    K_prec: int = 1
    break_index: int | None = None  # ell: last pre-break time index (1-based)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.C < 3:
            raise ModelError(f"need C >= 3 parts, got {self.C}")
        if self.K_mean < 0 or self.K_prec < 1:
            raise ModelError("K_mean must be >= 0 and K_prec >= 1 (intercept)")
        if self.variant != "baseline":
            if self.break_index is None:
                raise ModelError(f"variant {self.variant!r} requires a break_index")
            if self.break_index < 1:
                raise ModelError("break_index must be >= 1")

    @property
    def D(self) -> int:
        return self.C - 1


def direction(v_raw) -> np.ndarray:
    """Hemisphere-normalized unit direction: normalize, then negate if v[0] < 0."""
    v_raw = np.asarray(v_raw, dtype=float)
    norm = np.linalg.norm(v_raw)
    if norm == 0 or not np.isfinite(norm):
        raise ModelError("direction vector must be nonzero and finite")
    v = v_raw / norm
    if v[0] < 0:
        v = -v
    return v


def clr_direction(v, V: np.ndarray | None = None) -> np.ndarray:
    """Map a unit ILR direction to CLR space: u = V v (sums to zero, unit norm)."""
    v = np.asarray(v, dtype=float)
    if V is None:
        V = helmert_contrast(v.size + 1)
    if V.shape[1] != v.size:
        raise DimensionError(f"contrast has {V.shape[1]} columns, direction has {v.size}")
    return V @ v


@dataclass(frozen=True)
class ParamSet:
    """All free parameters of one model variant.

    The (v_raw, Delta) pair is canonicalized jointly at construction: if the
    normalized direction has a negative first coordinate, both are negated.
    This leaves the shift Delta * v unchanged and makes the sign symmetry of
    the posterior explicit -- ParamSet(-v_raw, -Delta) stores the same values
    as ParamSet(v_raw, Delta).
    """

    b: np.ndarray
    A_diag: np.ndarray
    Theta_diag: np.ndarray
    gamma: np.ndarray
    B: np.ndarray | None = None
    Delta: float = 0.0
    tau: float = 0.0
    kappa: float = 1.0
    v_raw: np.ndarray | None = None
    delta_phi: float = 0.0
    beta_covid: np.ndarray | None = None

    def __post_init__(self):
        arr = lambda x: np.asarray(x, dtype=float)
        object.__setattr__(self, "b", arr(self.b))
        object.__setattr__(self, "A_diag", arr(self.A_diag))
        object.__setattr__(self, "Theta_diag", arr(self.Theta_diag))
        object.__setattr__(self, "gamma", arr(self.gamma))
        D = self.b.size
        if self.B is None:
            object.__setattr__(self, "B", np.zeros((D, 0)))
        else:
            object.__setattr__(self, "B", arr(self.B).reshape(D, -1))
        if self.kappa <= 0:
            raise ModelError(f"kappa must be positive, got {self.kappa}")
        for name in ("A_diag", "Theta_diag"):
            vals = getattr(self, name)
            if np.any(np.abs(vals) >= ARMA_BOUND):
                raise ModelError(f"{name} entries must lie strictly inside (-{ARMA_BOUND}, {ARMA_BOUND})")
        if self.beta_covid is not None:
            object.__setattr__(self, "beta_covid", arr(self.beta_covid))
        if self.v_raw is not None:
            v_raw = arr(self.v_raw)
            norm = np.linalg.norm(v_raw)
            if norm == 0:
                raise ModelError("v_raw must be nonzero")
            if v_raw[0] / norm < 0:
                v_raw = -v_raw
                object.__setattr__(self, "Delta", -float(self.Delta))
            object.__setattr__(self, "v_raw", v_raw)

    @property
    def v(self) -> np.ndarray:
        """Derived hemisphere-normalized unit direction."""
        if self.v_raw is None:
            raise ModelError("this ParamSet has no direction vector")
        return direction(self.v_raw)


@dataclass(frozen=True)
class CovariateSet:
    """Design matrices for the mean (ILR drift) and precision models."""

    X_mean: np.ndarray  # (T, K_mean)
    X_prec: np.ndarray  # (T, K_prec), first column is the intercept

    def __post_init__(self):
        X_mean = np.atleast_2d(np.asarray(self.X_mean, dtype=float))
        X_prec = np.atleast_2d(np.asarray(self.X_prec, dtype=float))
        if X_mean.shape[0] != X_prec.shape[0]:
            raise ModelError(f"row mismatch: X_mean has {X_mean.shape[0]} rows, X_prec {X_prec.shape[0]}")
        if not (np.all(np.isfinite(X_mean)) and np.all(np.isfinite(X_prec))):
            raise ModelError("covariates must be finite")
        object.__setattr__(self, "X_mean", X_mean)
        object.__setattr__(self, "X_prec", X_prec)

    @property
    def T(self) -> int:
        return self.X_prec.shape[0]

    @staticmethod
    def empty(T: int, K_mean: int = 0, K_prec: int = 1) -> "CovariateSet":
        X_prec = np.zeros((T, K_prec))
        if K_prec >= 1:
            X_prec[:, 0] = 1.0
        return CovariateSet(np.zeros((T, K_mean)), X_prec)


@dataclass(frozen=True)
class CovariateDesign:
    """Declarative generated covariates: linear trend and seasonal harmonics.

    Columns are deterministic functions of the time index, so they extend past
    the training window without user input. The trend is t / T_train, which
    runs over (0, 1] in sample and extrapolates linearly for forecasts.
    """

    trend: bool = True
    harmonics: tuple[int, ...] = ()

    @property
    def K_mean(self) -> int:
        return int(self.trend) + 2 * len(self.harmonics)

    def mean_columns(self, times: np.ndarray, T_train: int) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        cols = []
        if self.trend:
            cols.append(times / float(T_train))
        for period in self.harmonics:
            cols.append(np.sin(2 * np.pi * times / period))
            cols.append(np.cos(2 * np.pi * times / period))
        if not cols:
            return np.zeros((times.size, 0))
        return np.column_stack(cols)

    def build(self, T_train: int) -> CovariateSet:
        t = np.arange(1, T_train + 1)
        return CovariateSet(self.mean_columns(t, T_train), np.ones((T_train, 1)))

    def extend(self, T_train: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        """Future (X_mean, X_prec) rows for t = T_train+1 .. T_train+horizon."""
        t = np.arange(T_train + 1, T_train + horizon + 1)
        return self.mean_columns(t, T_train), np.ones((horizon, 1))


@dataclass(frozen=True)
class SeriesState:
    """Deterministic state implied by (params, covariates, observed ILR series)."""

    eta: np.ndarray    # (T, D) conditional ILR means
    drift: np.ndarray  # (T, D)
    resid: np.ndarray  # (T, D) working residuals e_t = Z_t - eta_t
    lam: np.ndarray    # (T,) concentrations
    mu: np.ndarray     # (T, C) mean compositions


def gate(t, tau: float, kappa: float, ell: int):
    """Normalized logistic gate: 0 through the break index, rising toward 1 after.

    Scalar or array ``t`` accepted; the shape of ``t`` is preserved.
    """
    if kappa <= 0:
        raise ModelError(f"kappa must be positive, got {kappa}")
    t = np.asarray(t, dtype=float)
    # (sigma(k(t-tau)) - sigma(k(ell-tau))) / (1 - sigma(k(ell-tau))) rearranged
    # into a division-free form that stays stable when the gate saturates.
    w = expit(kappa * (t - tau)) * (-np.expm1(-kappa * (t - ell)))
    w = np.where(t <= ell, 0.0, w)
    return float(w) if w.ndim == 0 else w


def _shift_direction(params: ParamSet) -> np.ndarray:
    # Raw normalized direction; after canonicalization this equals params.v,
    # and Delta * (v_raw/||v_raw||) is exactly invariant to joint sign flips.
    return params.v_raw / np.linalg.norm(params.v_raw)


def _drift_and_lam(spec: ModelSpec, params: ParamSet, covariates: CovariateSet,
                   times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = params.b[None, :] + covariates.X_mean @ params.B.T
    log_lam = covariates.X_prec @ params.gamma
    if spec.variant == "intervention":
        w = gate(times, params.tau, params.kappa, spec.break_index)
        d = d + params.Delta * w[:, None] * _shift_direction(params)[None, :]
        log_lam = log_lam + params.delta_phi * w
    elif spec.variant == "fixed_effect":
        step = (times > spec.break_index).astype(float)
        d = d + step[:, None] * params.beta_covid[None, :]
    return d, np.exp(log_lam)


def build_state(spec: ModelSpec, params: ParamSet, covariates: CovariateSet,
                Z: np.ndarray, times: np.ndarray | None = None) -> SeriesState:
    """Run the ARMA recursion over an observed ILR series.

    eta_1 = d_1 and e_1 = Z_1 - d_1 (pre-sample residuals zero); for t >= 2,
    eta_t = d_t + A o (Z_{t-1} - d_{t-1}) + Theta o e_{t-1}, elementwise.
    ``times`` defaults to 1..T and feeds the gate / step dummy.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    T, D = Z.shape
    if D != spec.D:
        raise DimensionError(f"Z has {D} coordinates, spec implies {spec.D}")
    if covariates.T != T:
        raise DimensionError(f"covariates have {covariates.T} rows, series has {T}")
    if times is None:
        times = np.arange(1, T + 1)
    d, lam = _drift_and_lam(spec, params, covariates, np.asarray(times))
    r = Z - d
    e = np.empty_like(r)
    e[0] = r[0]
    A, Th = params.A_diag, params.Theta_diag
    for t in range(1, T):
        e[t] = r[t] - A * r[t - 1] - Th * e[t - 1]
    eta = Z - e
    mu = ilr_inv(eta)
    return SeriesState(eta=eta, drift=d, resid=e, lam=lam, mu=mu)


def dirichlet_log_pdf(y, alpha) -> float:
    """Dirichlet log density at composition y for parameter vector alpha."""
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ModelError("Dirichlet parameters must be positive")
    if np.any(y <= 0):
        raise ModelError("Dirichlet support is the open simplex")
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum() + ((alpha - 1.0) * np.log(y)).sum())


def _norm_lpdf(x, sd: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(-0.5 * np.sum((x / sd) ** 2) - x.size * (0.5 * np.log(2 * np.pi) + np.log(sd)))


def log_prior(spec: ModelSpec, params: ParamSet) -> float:
    """Joint log prior density in constrained space (no transform Jacobians).

    Out-of-support AR/MA or kappa values return -inf rather than raising,
    matching the sampler's rejection semantics; ParamSet construction already
    guards the hard invariants.
    """
    lp = _norm_lpdf(params.b, PRIOR_SD_B)
    lp += _norm_lpdf(params.B, PRIOR_SD_COEF)
    lp += _norm_lpdf(params.gamma, PRIOR_SD_COEF)
    for vals in (params.A_diag, params.Theta_diag):
        if np.any(np.abs(vals) >= ARMA_BOUND):
            return -np.inf
        lp += -vals.size * np.log(2 * ARMA_BOUND)
    if spec.variant == "fixed_effect":
        lp += _norm_lpdf(params.beta_covid, PRIOR_SD_COEF)
    if spec.variant == "intervention":
        if params.kappa <= 0:
            return -np.inf
        lp += _norm_lpdf(params.Delta, PRIOR_SD_DELTA)
        lp += _norm_lpdf(params.tau - (spec.break_index + PRIOR_TAU_OFFSET), PRIOR_SD_TAU)
        log_k = np.log(params.kappa)
        lp += (-0.5 * ((log_k - PRIOR_KAPPA_LOGMEAN) / PRIOR_KAPPA_LOGSD) ** 2
               - np.log(params.kappa) - np.log(PRIOR_KAPPA_LOGSD) - 0.5 * np.log(2 * np.pi))
        lp += _norm_lpdf(params.delta_phi, PRIOR_SD_DELTA_PHI)
        lp += _norm_lpdf(params.v_raw, 1.0)
    return float(lp)


def log_posterior(spec: ModelSpec, params: ParamSet, covariates: CovariateSet,
                  Y: np.ndarray, times: np.ndarray | None = None) -> float:
    """Unnormalized log posterior: log prior plus the Dirichlet likelihood over all t.

    ``Y`` is a (T, C) array of compositions; T = 0 reduces to the prior.
    Any Dirichlet parameter below the floor rejects the point (-inf).
    """
    lp = log_prior(spec, params)
    Y = np.asarray(Y, dtype=float).reshape(-1, spec.C)
    if Y.shape[0] == 0 or not np.isfinite(lp):
        return lp
    Z = ilr(Y)
    state = build_state(spec, params, covariates, Z, times)
    alpha = state.lam[:, None] * state.mu
    if np.any(alpha < ALPHA_FLOOR) or not np.all(np.isfinite(alpha)):
        return -np.inf
    ll = (gammaln(state.lam).sum() - gammaln(alpha).sum()
          + ((alpha - 1.0) * np.log(Y)).sum())
    return float(lp + ll)


def grad_log_posterior(spec: ModelSpec, params: ParamSet, covariates: CovariateSet,
                       Y: np.ndarray, times: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the log posterior in unconstrained coordinates.

    The returned vector is the gradient of log_posterior composed with the
    constraining transforms, plus the transform log-Jacobian -- i.e. the
    gradient of the density the sampler actually explores. Coordinates follow
    ``transforms.param_layout``.
    """
    from . import target, transforms  # local import to keep JAX out of the base path

    u = transforms.unconstrain(spec, params)
    tgt = target.make_target(spec, covariates, Y, times)
    _, g = tgt.value_and_grad(u)
    if not np.all(np.isfinite(g)):
        raise ModelError("gradient undefined at the boundary of the support")
    return np.asarray(g)
