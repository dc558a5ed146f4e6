"""No-U-Turn sampler with dual-averaging step size and diagonal mass adaptation.

The kernel is generic over any (log density, gradient) callable, so the same
machinery runs the model posterior, the prior alone, and toy targets in tests.
Per-chain RNG streams are spawned from a single seed; runs are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import target as target_mod
from . import transforms
from .model import CovariateSet, ModelSpec, ParamSet

__all__ = [
    "SamplerConfig",
    "PosteriorDraws",
    "Diagnostics",
    "InitializationError",
    "rhat",
    "run_chains",
    "sample_target",
]

DIVERGENCE_THRESHOLD = 1000.0
MAX_INIT_ATTEMPTS = 100


class InitializationError(RuntimeError):
    """No finite starting point found."""


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 500
    draws: int = 750
    seed: int = 0
    target_accept: float = 0.8
    max_tree_depth: int = 10
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self):
        if self.chains < 1 or self.warmup < 1 or self.draws < 1:
            raise ValueError("chains, warmup and draws must all be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class Diagnostics:
    rhat: dict[str, float]
    divergences: int
    mean_accept: float

    @property
    def max_rhat(self) -> float:
        finite = [v for v in self.rhat.values() if np.isfinite(v)]
        return max(finite) if finite else float("inf")

    def converged(self, threshold: float = 1.01) -> bool:
        return self.divergences == 0 and all(v < threshold for v in self.rhat.values())


@dataclass
class PosteriorDraws:
    """Constrained-space draws with per-iteration sampler records."""

    spec: ModelSpec | None
    param_names: list[str]
    draws: np.ndarray          # (chains, n, P) constrained values
    unconstrained: np.ndarray  # (chains, n, dim)
    log_post: np.ndarray       # (chains, n) target density incl. Jacobian
    energy_error: np.ndarray   # (chains, n) max energy error in the trajectory
    accept_stat: np.ndarray    # (chains, n)
    tree_depth: np.ndarray     # (chains, n)
    step_size: np.ndarray      # (chains,)
    mass_diag: np.ndarray      # (chains, dim) diagonal momentum covariance
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_total(self) -> int:
        return self.draws.shape[0] * self.draws.shape[1]

    def divergent(self, threshold: float | None = None) -> np.ndarray:
        thr = self.divergence_threshold if threshold is None else threshold
        return self.energy_error > thr

    def stacked(self) -> np.ndarray:
        """All chains concatenated, shape (chains*n, P)."""
        return self.draws.reshape(-1, self.draws.shape[-1])

    def column(self, name: str) -> np.ndarray:
        return self.stacked()[:, self.param_names.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        """Stacked columns ``prefix[...]`` as an (chains*n, k) array."""
        idx = [i for i, n in enumerate(self.param_names)
               if n == prefix or n.startswith(prefix + "[")]
        if not idx:
            raise KeyError(f"no parameter block {prefix!r}")
        return self.stacked()[:, idx]

    def param_sets(self):
        """Iterate the draws as ParamSet objects (needs a model spec)."""
        if self.spec is None:
            raise ValueError("these draws are not tied to a model spec")
        for u in self.unconstrained.reshape(-1, self.unconstrained.shape[-1]):
            yield transforms.constrain(self.spec, u)

    def diagnostics(self) -> Diagnostics:
        values = {}
        for j, name in enumerate(self.param_names):
            values[name] = rhat(self.draws[:, :, j])
        return Diagnostics(
            rhat=values,
            divergences=int(self.divergent().sum()),
            mean_accept=float(self.accept_stat.mean()),
        )

    def to_frame(self) -> pd.DataFrame:
        chains, n, _ = self.draws.shape
        frame = pd.DataFrame(self.stacked(), columns=self.param_names)
        frame.insert(0, "iteration", np.tile(np.arange(1, n + 1), chains))
        frame.insert(0, "chain", np.repeat(np.arange(1, chains + 1), n))
        frame["lp"] = self.log_post.reshape(-1)
        frame["divergent"] = self.divergent().reshape(-1).astype(int)
        return frame


def rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction factor for one scalar parameter.

    ``chains`` is (m, n). Each chain is split in half; returns +inf when the
    within-chain variance is zero.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    half = n // 2
    if half < 2:
        raise ValueError(f"need chain length >= 4 for split R-hat, got {n}")
    halves = np.concatenate([chains[:, :half], chains[:, half:2 * half]], axis=0)
    W = halves.var(axis=1, ddof=1).mean()
    if W <= 0:
        return float("inf")
    B = half * halves.mean(axis=1).var(ddof=1)
    var_hat = (half - 1) / half * W + B / half
    return float(np.sqrt(var_hat / W))


# ---------------------------------------------------------------------------
# NUTS kernel
# ---------------------------------------------------------------------------
#
# The doubling scheme follows the slice-sampling NUTS formulation, but each
# subtree is integrated as a batch of leapfrog steps (one jitted call per
# chunk) and its U-turn checks and proposal selection are done vectorized on
# the returned trajectory. Selecting uniformly among the slice-admissible
# states of a subtree is distributionally identical to the recursive
# progressive selection.

TRAJECTORY_CHUNK = 64


def _leapfrog(value_and_grad, u, p, grad, eps, inv_mass):
    p_half = p + 0.5 * eps * grad
    u_new = u + eps * inv_mass * p_half
    f_new, g_new = value_and_grad(u_new)
    p_new = p_half + 0.5 * eps * g_new
    return u_new, p_new, g_new, f_new


def _python_trajectory(value_and_grad):
    """Fallback batched integrator for targets without a compiled trajectory."""

    def traj(u, p, g, eps_signed, inv_mass, n_steps):
        dim = u.size
        us = np.empty((n_steps, dim))
        ps = np.empty((n_steps, dim))
        gs = np.empty((n_steps, dim))
        fs = np.empty(n_steps)
        for i in range(n_steps):
            u, p, g, f = _leapfrog(value_and_grad, u, p, g, eps_signed, inv_mass)
            us[i], ps[i], gs[i], fs[i] = u, p, g, f
        return us, ps, gs, fs

    return traj


def _joint(f, p, inv_mass):
    if not np.isfinite(f):
        return -np.inf
    return f - 0.5 * float(np.sum(inv_mass * p * p))


def _subtree_no_uturn(us, ps, inv_mass, direction):
    """Check every internal balanced block of the subtree for U-turns."""
    n = us.shape[0]
    vels = inv_mass * ps
    k = 2
    while k <= n:
        a = np.arange(0, n, k)
        b = a + k - 1
        du = direction * (us[b] - us[a])
        if (np.einsum("ij,ij->i", du, vels[a]) < 0).any():
            return False
        if (np.einsum("ij,ij->i", du, vels[b]) < 0).any():
            return False
        k *= 2
    return True


def _nuts_step(trajectory, u, f, grad, eps, inv_mass, max_depth, max_delta, rng):
    dim = u.size
    p0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
    joint0 = _joint(f, p0, inv_mass)
    log_u = joint0 + np.log(rng.uniform())

    u_minus, p_minus, g_minus = u, p0, grad
    u_plus, p_plus, g_plus = u, p0, grad
    u_cur, f_cur, g_cur = u, f, grad
    n, depth = 1, 0
    max_err = -np.inf
    sum_alpha, n_alpha = 0.0, 0

    while depth < max_depth:
        direction = -1.0 if rng.uniform() < 0.5 else 1.0
        if direction < 0:
            eu, ep, eg = u_minus, p_minus, g_minus
        else:
            eu, ep, eg = u_plus, p_plus, g_plus
        n_steps = 2 ** depth

        # Integrate the new subtree in chunks, aborting once it diverges.
        parts = []
        diverged = False
        remaining = n_steps
        while remaining > 0:
            size = min(remaining, TRAJECTORY_CHUNK)
            us, ps, gs, fs = trajectory(eu, ep, eg, direction * eps, inv_mass, size)
            joints = fs - 0.5 * np.sum(inv_mass * ps * ps, axis=1)
            joints = np.where(np.isfinite(joints), joints, -np.inf)
            parts.append((us, ps, gs, fs, joints))
            errs = joint0 - joints
            max_err = max(max_err, float(errs.max()))
            alphas = np.exp(np.minimum(joints - joint0, 0.0))
            sum_alpha += float(np.where(np.isfinite(joints), alphas, 0.0).sum())
            n_alpha += size
            if np.any(log_u >= joints + max_delta):
                diverged = True
                break
            eu, ep, eg = us[-1], ps[-1], gs[-1]
            remaining -= size

        depth += 1
        if diverged:
            break
        us = np.concatenate([p[0] for p in parts])
        ps = np.concatenate([p[1] for p in parts])
        gs = np.concatenate([p[2] for p in parts])
        fs = np.concatenate([p[3] for p in parts])
        joints = np.concatenate([p[4] for p in parts])
        if not _subtree_no_uturn(us, ps, inv_mass, direction):
            break

        valid = np.flatnonzero(log_u <= joints)
        n1 = valid.size
        if n1 > 0:
            idx = valid[rng.integers(n1)]
            if rng.uniform() < min(1.0, n1 / n):
                u_cur, f_cur, g_cur = us[idx], fs[idx], gs[idx]
        n += n1

        if direction < 0:
            u_minus, p_minus, g_minus = us[-1], ps[-1], gs[-1]
        else:
            u_plus, p_plus, g_plus = us[-1], ps[-1], gs[-1]
        du = u_plus - u_minus
        if (np.dot(du, inv_mass * p_minus) < 0) or (np.dot(du, inv_mass * p_plus) < 0):
            break

    accept = sum_alpha / max(n_alpha, 1)
    return u_cur, f_cur, g_cur, depth, accept, max_err


def _find_reasonable_epsilon(value_and_grad, u, f, grad, inv_mass, rng):
    eps = 1.0
    p = rng.standard_normal(u.size) / np.sqrt(inv_mass)
    joint0 = _joint(f, p, inv_mass)
    _, p1, _, f1 = _leapfrog(value_and_grad, u, p, grad, eps, inv_mass)
    joint1 = _joint(f1, p1, inv_mass)
    # Halve until the first step is at least sane.
    while not np.isfinite(joint1) and eps > 1e-10:
        eps *= 0.5
        _, p1, _, f1 = _leapfrog(value_and_grad, u, p, grad, eps, inv_mass)
        joint1 = _joint(f1, p1, inv_mass)
    a = 1.0 if joint1 - joint0 > np.log(0.5) else -1.0
    while a * (joint1 - joint0) > -a * np.log(2.0):
        eps *= 2.0 ** a
        if eps > 1e7 or eps < 1e-10:
            break
        _, p1, _, f1 = _leapfrog(value_and_grad, u, p, grad, eps, inv_mass)
        joint1 = _joint(f1, p1, inv_mass)
        if not np.isfinite(joint1):
            if a > 0:
                eps *= 0.5
            break
    return eps


@dataclass
class _DualAveraging:
    """Nesterov dual averaging of log step size (NUTS paper defaults)."""

    eps0: float
    target: float
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    count: int = 0
    h_bar: float = 0.0
    log_eps_bar: float = 0.0

    def __post_init__(self):
        self.mu = np.log(10.0 * self.eps0)
        self.log_eps = np.log(self.eps0)

    def update(self, accept: float) -> float:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept)
        self.log_eps = self.mu - np.sqrt(self.count) / self.gamma * self.h_bar
        weight = self.count ** (-self.kappa)
        self.log_eps_bar = weight * self.log_eps + (1.0 - weight) * self.log_eps_bar
        return np.exp(self.log_eps)


def _estimate_inv_mass(window: list[np.ndarray]) -> np.ndarray:
    sample = np.asarray(window)
    var = sample.var(axis=0, ddof=1)
    k = sample.shape[0]
    # Shrink toward a small constant, Stan-style, to damp noisy estimates.
    inv_mass = (k / (k + 5.0)) * var + (5.0 / (k + 5.0)) * 1e-3
    return np.maximum(inv_mass, 1e-10)


def nuts_chain(value_and_grad, trajectory, u0, config: SamplerConfig, rng: np.random.Generator):
    """Run warmup + sampling for one chain; returns draws and per-draw records.

    Warmup schedule: step-size dual averaging runs throughout. The diagonal
    mass matrix is re-estimated twice -- a provisional estimate at mid-warmup
    from the preceding quarter, and the final estimate at 90% of warmup from
    the second-half draws -- with dual averaging restarted after each update so
    epsilon settles under the metric it will be used with.
    """
    dim = u0.size
    inv_mass = np.ones(dim)
    f, grad = value_and_grad(u0)
    if not np.isfinite(f):
        raise InitializationError("non-finite log density at the initial point")
    u = u0.copy()
    eps = _find_reasonable_epsilon(value_and_grad, u, f, grad, inv_mass, rng)
    da = _DualAveraging(eps, config.target_accept)

    w = config.warmup
    updates = {w // 2: w // 4, max((9 * w) // 10, w // 2 + 1): w // 2}
    window: list[np.ndarray] = []
    window_start = w // 4

    n = config.draws
    out_u = np.empty((n, dim))
    out_f = np.empty(n)
    out_err = np.empty(n)
    out_accept = np.empty(n)
    out_depth = np.empty(n, dtype=int)

    for it in range(w + n):
        u, f, grad, depth, accept, err = _nuts_step(
            trajectory, u, f, grad, eps, inv_mass,
            config.max_tree_depth, config.divergence_threshold, rng)
        if it < w:
            eps = da.update(accept)
            if it >= window_start:
                window.append(u.copy())
            if (it + 1) in updates and len(window) >= 10:
                inv_mass = _estimate_inv_mass(window)
                window = []
                window_start = it + 1
                eps = _find_reasonable_epsilon(value_and_grad, u, f, grad, inv_mass, rng)
                da = _DualAveraging(eps, config.target_accept)
            if it == w - 1:
                eps = float(np.exp(da.log_eps_bar))
        else:
            j = it - config.warmup
            out_u[j] = u
            out_f[j] = f
            out_err[j] = err
            out_accept[j] = accept
            out_depth[j] = depth
    return out_u, out_f, out_err, out_accept, out_depth, eps, inv_mass


def _initialize(value_and_grad, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-2, 2) start in unconstrained space, retried until finite."""
    for _ in range(MAX_INIT_ATTEMPTS):
        u0 = rng.uniform(-2.0, 2.0, size=dim)
        f, g = value_and_grad(u0)
        if np.isfinite(f) and np.all(np.isfinite(g)):
            return u0
    raise InitializationError(
        f"no finite log posterior found in {MAX_INIT_ATTEMPTS} initialization attempts")


def initialize(spec: ModelSpec, covariates: CovariateSet, Y, seed: int) -> ParamSet:
    """Draw a random feasible starting ParamSet for a model."""
    tgt = target_mod.make_target(spec, covariates, Y)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    u0 = _initialize(tgt.value_and_grad, tgt.dim, rng)
    return transforms.constrain(spec, u0)


def _chain_rngs(seed: int, chains: int) -> list[np.random.Generator]:
    root = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in root.spawn(chains)]


def sample_target(value_and_grad, dim: int, config: SamplerConfig,
                  param_names: list[str] | None = None,
                  constrain_fn=None, spec: ModelSpec | None = None,
                  trajectory=None) -> PosteriorDraws:
    """Sample an arbitrary unconstrained target with the full warmup schedule.

    ``constrain_fn`` maps an unconstrained vector to the stored (named) values;
    identity by default.
    """
    if param_names is None:
        param_names = [f"x[{i}]" for i in range(dim)]
    if constrain_fn is None:
        constrain_fn = lambda u: u
    if trajectory is None:
        trajectory = _python_trajectory(value_and_grad)
    rngs = _chain_rngs(config.seed, config.chains)
    n = config.draws
    P = len(param_names)
    draws = np.empty((config.chains, n, P))
    unconstrained = np.empty((config.chains, n, dim))
    log_post = np.empty((config.chains, n))
    energy_error = np.empty((config.chains, n))
    accept = np.empty((config.chains, n))
    depth = np.empty((config.chains, n), dtype=int)
    step_sizes = np.empty(config.chains)
    masses = np.empty((config.chains, dim))
    for c, rng in enumerate(rngs):
        u0 = _initialize(value_and_grad, dim, rng)
        res = nuts_chain(value_and_grad, trajectory, u0, config, rng)
        out_u, out_f, out_err, out_acc, out_depth, eps, inv_mass = res
        unconstrained[c] = out_u
        log_post[c] = out_f
        energy_error[c] = out_err
        accept[c] = out_acc
        depth[c] = out_depth
        step_sizes[c] = eps
        masses[c] = inv_mass
        for j in range(n):
            draws[c, j] = constrain_fn(out_u[j])
    return PosteriorDraws(
        spec=spec, param_names=param_names, draws=draws, unconstrained=unconstrained,
        log_post=log_post, energy_error=energy_error, accept_stat=accept,
        tree_depth=depth, step_size=step_sizes, mass_diag=masses,
        divergence_threshold=config.divergence_threshold)


def constrained_names(spec: ModelSpec) -> list[str]:
    """Flat column names for the constrained draws of one variant."""
    D = spec.D
    names = [f"b[{d}]" for d in range(D)]
    names += [f"B[{d},{k}]" for d in range(D) for k in range(spec.K_mean)]
    names += [f"A[{d}]" for d in range(D)]
    names += [f"Theta[{d}]" for d in range(D)]
    names += [f"gamma[{k}]" for k in range(spec.K_prec)]
    if spec.variant == "fixed_effect":
        names += [f"beta_covid[{d}]" for d in range(D)]
    elif spec.variant == "intervention":
        names += ["Delta", "tau", "kappa"]
        names += [f"v[{d}]" for d in range(D)]
        names += ["delta_phi"]
    return names


def flatten_params(spec: ModelSpec, params: ParamSet) -> np.ndarray:
    """Constrained values in the order of :func:`constrained_names`.

    The direction is stored as the canonical unit vector; Delta matches it.
    """
    parts = [params.b, np.ravel(params.B), params.A_diag, params.Theta_diag, params.gamma]
    if spec.variant == "fixed_effect":
        parts.append(params.beta_covid)
    elif spec.variant == "intervention":
        parts += [np.array([params.Delta, params.tau, params.kappa]),
                  params.v, np.array([params.delta_phi])]
    return np.concatenate([np.atleast_1d(p) for p in parts])


def run_chains(spec: ModelSpec, covariates: CovariateSet, Y,
               config: SamplerConfig, times=None) -> PosteriorDraws:
    """Fit one model by NUTS; deterministic given the config seed."""
    tgt = target_mod.make_target(spec, covariates, Y, times)
    names = constrained_names(spec)
    constrain_fn = lambda u: flatten_params(spec, transforms.constrain(spec, u))
    return sample_target(tgt.value_and_grad, tgt.dim, config,
                         param_names=names, constrain_fn=constrain_fn, spec=spec,
                         trajectory=tgt.trajectory)
