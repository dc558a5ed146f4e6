"""JAX log density over the unconstrained parameter vector, with exact gradient.

This mirrors ``dirshift.model`` (priors, recursion, Dirichlet likelihood) plus
the transform log-Jacobian from ``dirshift.transforms``; the two routes are
cross-checked in the test suite. The jitted kernels live at module level and
take the data as arguments, so repeated fits with identical shapes (rolling
origins, simulation replications) reuse the compiled code.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp
from jax.scipy.special import gammaln

from .geometry import helmert_contrast, ilr
from .model import (
    ALPHA_FLOOR,
    ARMA_BOUND,
    PRIOR_KAPPA_LOGMEAN,
    PRIOR_KAPPA_LOGSD,
    PRIOR_SD_B,
    PRIOR_SD_COEF,
    PRIOR_SD_DELTA,
    PRIOR_SD_DELTA_PHI,
    PRIOR_SD_TAU,
    PRIOR_TAU_OFFSET,
    CovariateSet,
    ModelSpec,
)
from .transforms import param_layout

__all__ = ["Target", "make_target"]

# log(lambda) beyond this is rejected; far outside any plausible concentration.
MAX_LOG_LAM = 40.0


def _normal(x, sd):
    return -0.5 * jnp.sum((x / sd) ** 2) - x.size * (0.5 * jnp.log(2 * jnp.pi) + jnp.log(sd))


def _log_density(u, Z, logY, X_mean, X_prec, t_idx, ell, *, variant, D, K_mean):
    layout_slices = {}
    pos = 0
    sizes = [("b", D), ("B", D * K_mean), ("A", D), ("Theta", D), ("gamma", X_prec.shape[1])]
    if variant == "fixed_effect":
        sizes.append(("beta_covid", D))
    elif variant == "intervention":
        sizes += [("Delta", 1), ("tau", 1), ("kappa", 1), ("v_raw", D), ("delta_phi", 1)]
    for name, size in sizes:
        layout_slices[name] = slice(pos, pos + size)
        pos += size

    b = u[layout_slices["b"]]
    B = u[layout_slices["B"]].reshape(D, K_mean)
    A_u = u[layout_slices["A"]]
    Th_u = u[layout_slices["Theta"]]
    gamma = u[layout_slices["gamma"]]
    A = ARMA_BOUND * (2.0 * jax.nn.sigmoid(A_u) - 1.0)
    Th = ARMA_BOUND * (2.0 * jax.nn.sigmoid(Th_u) - 1.0)

    # Priors in unconstrained space; the uniform AR/MA density merged with its
    # transform Jacobian leaves -u - 2*softplus(-u) per entry.
    lp = _normal(b, PRIOR_SD_B) + _normal(B, PRIOR_SD_COEF) + _normal(gamma, PRIOR_SD_COEF)
    lp -= 2.0 * D * jnp.log(2 * ARMA_BOUND)
    for seg in (A_u, Th_u):
        lp += jnp.sum(jnp.log(2 * ARMA_BOUND) - seg - 2.0 * jnp.logaddexp(0.0, -seg))

    if variant == "fixed_effect":
        beta = u[layout_slices["beta_covid"]]
        lp += _normal(beta, PRIOR_SD_COEF)
    elif variant == "intervention":
        delta = u[layout_slices["Delta"]][0]
        tau = u[layout_slices["tau"]][0]
        log_kappa = u[layout_slices["kappa"]][0]
        v_raw = u[layout_slices["v_raw"]]
        delta_phi = u[layout_slices["delta_phi"]][0]
        lp += _normal(jnp.atleast_1d(delta), PRIOR_SD_DELTA)
        lp += _normal(jnp.atleast_1d(tau - (ell + PRIOR_TAU_OFFSET)), PRIOR_SD_TAU)
        lp += _normal(jnp.atleast_1d(log_kappa - PRIOR_KAPPA_LOGMEAN), PRIOR_KAPPA_LOGSD)
        lp += _normal(v_raw, 1.0)
        lp += _normal(jnp.atleast_1d(delta_phi), PRIOR_SD_DELTA_PHI)

    T = Z.shape[0]
    if T == 0:
        return lp

    d = b[None, :] + X_mean @ B.T
    log_lam = X_prec @ gamma
    if variant == "intervention":
        kappa = jnp.exp(log_kappa)
        w = jax.nn.sigmoid(kappa * (t_idx - tau)) * (-jnp.expm1(-kappa * (t_idx - ell)))
        w = jnp.where(t_idx <= ell, 0.0, w)
        vhat = v_raw / jnp.linalg.norm(v_raw)
        d = d + delta * w[:, None] * vhat[None, :]
        log_lam = log_lam + delta_phi * w
    elif variant == "fixed_effect":
        d = d + (t_idx > ell)[:, None].astype(float) * beta[None, :]

    r = Z - d
    if T > 1:
        def step(e_prev, rr):
            r_t, r_prev = rr
            e_t = r_t - A * r_prev - Th * e_prev
            return e_t, e_t

        _, e_rest = jax.lax.scan(step, r[0], (r[1:], r[:-1]))
        e = jnp.concatenate([r[:1], e_rest], axis=0)
    else:
        e = r
    eta = Z - e

    V = jnp.asarray(helmert_contrast(D + 1))
    lam = jnp.exp(jnp.clip(log_lam, -MAX_LOG_LAM, MAX_LOG_LAM))
    mu = jax.nn.softmax(eta @ V.T, axis=-1)
    # Clamp alpha at the floor rather than rejecting: a -inf cliff makes the
    # integrator diverge whenever a trajectory grazes the (negligible-mass)
    # region where a predicted share underflows, while the clamp keeps the
    # density finite and smooth there. The strict-rejection form lives in
    # ``model.log_posterior``; the two agree wherever no alpha is clamped.
    alpha = jnp.maximum(lam[:, None] * mu, ALPHA_FLOOR)
    ll = (jnp.sum(gammaln(lam)) - jnp.sum(gammaln(alpha))
          + jnp.sum((alpha - 1.0) * logY))
    return lp + ll


_value = jax.jit(_log_density, static_argnames=("variant", "D", "K_mean"))
_value_and_grad = jax.jit(jax.value_and_grad(_log_density),
                          static_argnames=("variant", "D", "K_mean"))


@partial(jax.jit, static_argnames=("variant", "D", "K_mean", "n_steps"))
def _trajectory(u, p, g, eps_signed, inv_mass, Z, logY, X_mean, X_prec, t_idx, ell,
                *, variant, D, K_mean, n_steps):
    """n_steps leapfrog steps; returns the visited (u, p, grad, logp) stacks."""

    def step(carry, _):
        u0, p0, g0 = carry
        p_half = p0 + 0.5 * eps_signed * g0
        u1 = u0 + eps_signed * inv_mass * p_half
        f1, g1 = jax.value_and_grad(_log_density)(
            u1, Z, logY, X_mean, X_prec, t_idx, ell,
            variant=variant, D=D, K_mean=K_mean)
        p1 = p_half + 0.5 * eps_signed * g1
        return (u1, p1, g1), (u1, p1, g1, f1)

    _, ys = jax.lax.scan(step, (u, p, g), None, length=n_steps)
    return ys


@dataclass(frozen=True)
class Target:
    """Unnormalized log density over the unconstrained vector, with kernels."""

    dim: int
    _args: tuple
    _statics: dict

    def log_density(self, u: np.ndarray) -> float:
        return float(_value(jnp.asarray(u), *self._args, **self._statics))

    def value_and_grad(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        f, g = _value_and_grad(jnp.asarray(u), *self._args, **self._statics)
        return float(f), np.asarray(g)

    def trajectory(self, u, p, g, eps_signed, inv_mass, n_steps: int):
        """Batched leapfrog integration used by the tree builder."""
        us, ps, gs, fs = _trajectory(u, p, g, eps_signed, inv_mass,
                                     *self._args, **self._statics, n_steps=n_steps)
        return np.asarray(us), np.asarray(ps), np.asarray(gs), np.asarray(fs)


def make_target(spec: ModelSpec, covariates: CovariateSet, Y: np.ndarray,
                times: np.ndarray | None = None) -> Target:
    """Bind one dataset into the jitted kernels.

    ``Y`` with zero rows yields the prior (plus Jacobian) alone, used for
    prior-predictive sampling checks.
    """
    Y = np.asarray(Y, dtype=float).reshape(-1, spec.C)
    T = Y.shape[0]
    if times is None:
        times = np.arange(1, T + 1)
    if T > 0:
        Z = ilr(Y)
        logY = np.log(Y)
    else:
        Z = np.zeros((0, spec.D))
        logY = np.zeros((0, spec.C))
    ell = float(spec.break_index) if spec.break_index is not None else 0.0
    args = (jnp.asarray(Z), jnp.asarray(logY),
            jnp.asarray(covariates.X_mean[:T].reshape(T, spec.K_mean)),
            jnp.asarray(covariates.X_prec[:T]),
            jnp.asarray(np.asarray(times, dtype=float)), ell)
    statics = dict(variant=spec.variant, D=spec.D, K_mean=spec.K_mean)
    ndim = sum(block.size for block in param_layout(spec))
    return Target(dim=ndim, _args=args, _statics=statics)
