"""Aitchison-geometry primitives: contrast matrices, CLR/ILR transforms, distance, zero handling.

Compositions are represented as plain 1-D numpy arrays of strictly positive
proportions summing to one. Validation happens once, at the point a raw vector
enters the system (``validate_composition`` / ``close_with_floor``); the
transform functions assume valid input on the hot path.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "CompositionError",
    "DimensionError",
    "validate_composition",
    "helmert_contrast",
    "clr",
    "ilr",
    "ilr_inv",
    "aitchison_distance",
    "close_with_floor",
]

SUM_TOL = 1e-12


class CompositionError(ValueError):
    """Raised when a vector is not a valid composition."""


class DimensionError(ValueError):
    """Raised on incompatible dimensions."""


def validate_composition(y, tol: float = 1e-9) -> np.ndarray:
    """Check that ``y`` is strictly positive and sums to one; return it as an array.

    ``tol`` bounds the allowed deviation of the sum from 1. Inputs produced by
    our own samplers satisfy the tighter 1e-12 bound; external data should go
    through :func:`close_with_floor` first, which renormalizes exactly.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise CompositionError(f"composition must be a 1-D vector with >= 2 parts, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise CompositionError("composition has non-finite entries")
    if np.any(y <= 0):
        raise CompositionError("composition entries must be strictly positive")
    s = y.sum()
    if abs(s - 1.0) > tol:
        raise CompositionError(f"composition sums to {s!r}, not 1")
    return y


def helmert_contrast(C: int) -> np.ndarray:
    """Helmert-style orthonormal contrast matrix, shape (C, C-1).

    Column i (1-based) has 1/sqrt(i(i+1)) in rows 1..i, -i/sqrt(i(i+1)) in
    row i+1, and zeros below. Columns are orthonormal and sum to zero.
    """
    if C < 2:
        raise DimensionError(f"need C >= 2 parts, got {C}")
    V = np.zeros((C, C - 1))
    for i in range(1, C):
        norm = 1.0 / np.sqrt(i * (i + 1))
        V[:i, i - 1] = norm
        V[i, i - 1] = -i * norm
    return V


def clr(y: np.ndarray) -> np.ndarray:
    """Centered log-ratio: ln(y_j / g(y)) with g the geometric mean. Sums to zero."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise CompositionError("clr requires strictly positive entries")
    ly = np.log(y)
    return ly - ly.mean(axis=-1, keepdims=True)


def ilr(y: np.ndarray, V: np.ndarray | None = None) -> np.ndarray:
    """Isometric log-ratio coordinates V^T clr(y). Defaults to the Helmert contrast."""
    y = np.asarray(y, dtype=float)
    C = y.shape[-1]
    if V is None:
        V = helmert_contrast(C)
    if V.shape[0] != C:
        raise DimensionError(f"contrast has {V.shape[0]} rows, composition has {C} parts")
    return clr(y) @ V


def ilr_inv(z: np.ndarray, V: np.ndarray | None = None) -> np.ndarray:
    """Map ILR coordinates back to the simplex: y_j proportional to exp((Vz)_j).

    The exponent is shifted by its max before exponentiating, so any finite z
    yields a valid composition (no overflow).
    """
    z = np.asarray(z, dtype=float)
    D = z.shape[-1]
    if V is None:
        V = helmert_contrast(D + 1)
    if V.shape[1] != D:
        raise DimensionError(f"contrast has {V.shape[1]} columns, coordinates have {D}")
    logits = z @ V.T
    logits = logits - logits.max(axis=-1, keepdims=True)
    y = np.exp(logits)
    return y / y.sum(axis=-1, keepdims=True)


def aitchison_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Euclidean norm of the clr difference; equals the ILR-coordinate distance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.linalg.norm(clr(x) - clr(y)))


def close_with_floor(raw, floor: float = 1e-8) -> np.ndarray:
    """Floor near-zero entries at ``floor``, then renormalize to sum one.

    The floor is applied before renormalization, so a flat zero becomes exactly
    ``floor`` relative to the raw scale of the other entries.
    """
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise CompositionError("input must be finite and non-negative")
    if not np.any(raw > 0):
        raise CompositionError("input must have at least one positive entry")
    floored = np.maximum(raw, floor)
    return floored / floored.sum(axis=-1, keepdims=True)
