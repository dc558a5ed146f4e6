"""Packing of ParamSet into an unconstrained real vector and back.

The sampler works on this vector. kappa maps through log; the AR/MA diagonals
map through a scaled logit onto (-0.99, 0.99); everything else is identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .model import ARMA_BOUND, ModelError, ModelSpec, ParamSet

__all__ = ["Block", "param_layout", "dim", "unconstrain", "constrain", "constrain_with_logjac"]

# Transform kinds
IDENTITY = "identity"
INTERVAL = "interval"  # scaled logit onto (-ARMA_BOUND, ARMA_BOUND)
LOG = "log"


@dataclass(frozen=True)
class Block:
    name: str
    size: int
    transform: str = IDENTITY


def param_layout(spec: ModelSpec) -> list[Block]:
    """Ordered parameter blocks for one variant."""
    D = spec.D
    blocks = [
        Block("b", D),
        Block("B", D * spec.K_mean),
        Block("A", D, INTERVAL),
        Block("Theta", D, INTERVAL),
        Block("gamma", spec.K_prec),
    ]
    if spec.variant == "fixed_effect":
        blocks.append(Block("beta_covid", D))
    elif spec.variant == "intervention":
        blocks += [
            Block("Delta", 1),
            Block("tau", 1),
            Block("kappa", 1, LOG),
            Block("v_raw", D),
            Block("delta_phi", 1),
        ]
    return blocks


def dim(spec: ModelSpec) -> int:
    return sum(block.size for block in param_layout(spec))


def _to_interval(u: np.ndarray) -> np.ndarray:
    return ARMA_BOUND * (2.0 * expit(u) - 1.0)


def _from_interval(x: np.ndarray) -> np.ndarray:
    if np.any(np.abs(x) >= ARMA_BOUND):
        raise ModelError(f"value outside (-{ARMA_BOUND}, {ARMA_BOUND})")
    return logit((x / ARMA_BOUND + 1.0) / 2.0)


def unconstrain(spec: ModelSpec, params: ParamSet) -> np.ndarray:
    """Flatten a ParamSet into the unconstrained sampling vector."""
    parts = [params.b, np.ravel(params.B),
             _from_interval(params.A_diag), _from_interval(params.Theta_diag),
             params.gamma]
    if spec.variant == "fixed_effect":
        parts.append(params.beta_covid)
    elif spec.variant == "intervention":
        if params.kappa <= 0:
            raise ModelError("kappa must be positive")
        parts += [np.array([params.Delta, params.tau, np.log(params.kappa)]),
                  params.v_raw, np.array([params.delta_phi])]
    u = np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])
    if u.size != dim(spec):
        raise ModelError(f"parameter vector has length {u.size}, expected {dim(spec)}")
    return u


def constrain(spec: ModelSpec, u: np.ndarray) -> ParamSet:
    """Inverse of :func:`unconstrain`. The resulting ParamSet is canonicalized."""
    return constrain_with_logjac(spec, u)[0]


def constrain_with_logjac(spec: ModelSpec, u: np.ndarray) -> tuple[ParamSet, float]:
    """Map an unconstrained vector to a ParamSet plus the transform log-Jacobian.

    The log-Jacobian is what must be added to the constrained-space log density
    to obtain the density over the unconstrained vector.
    """
    u = np.asarray(u, dtype=float)
    if u.size != dim(spec):
        raise ModelError(f"vector has length {u.size}, expected {dim(spec)}")
    D = spec.D
    out: dict[str, np.ndarray] = {}
    pos = 0
    log_jac = 0.0
    for block in param_layout(spec):
        seg = u[pos:pos + block.size]
        pos += block.size
        if block.transform == INTERVAL:
            out[block.name] = _to_interval(seg)
            # d/du of ARMA_BOUND*(2*sigmoid(u)-1) = 2*ARMA_BOUND*sigmoid'(u)
            log_jac += float(np.sum(np.log(2 * ARMA_BOUND) - seg - 2.0 * np.logaddexp(0.0, -seg)))
        elif block.transform == LOG:
            out[block.name] = np.exp(seg)
            log_jac += float(seg.sum())
        else:
            out[block.name] = seg.copy()
    kwargs = dict(
        b=out["b"],
        B=out["B"].reshape(D, spec.K_mean),
        A_diag=out["A"],
        Theta_diag=out["Theta"],
        gamma=out["gamma"],
    )
    if spec.variant == "fixed_effect":
        kwargs["beta_covid"] = out["beta_covid"]
    elif spec.variant == "intervention":
        kwargs.update(
            Delta=float(out["Delta"][0]),
            tau=float(out["tau"][0]),
            kappa=float(out["kappa"][0]),
            v_raw=out["v_raw"],
            delta_phi=float(out["delta_phi"][0]),
        )
    return ParamSet(**kwargs), log_jac
