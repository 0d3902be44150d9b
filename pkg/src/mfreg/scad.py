"""Smoothly clipped absolute deviation penalty and group-norm helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScadParams:
    """Penalty level and concavity knot; a = 3.7 is the conventional choice."""

    lam: float
    a: float = 3.7

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("penalty level must be nonnegative")
        if self.a <= 2:
            raise ValueError("concavity parameter must exceed 2")


def scad_derivative(theta, params: ScadParams):
    """Derivative of the penalty: lam on [0, lam], linearly clipped to 0 at a*lam."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("penalty argument must be nonnegative")
    lam, a = params.lam, params.a
    if lam == 0:
        out = np.zeros_like(theta)
        return out if out.ndim else 0.0
    out = np.where(
        theta <= lam,
        lam,
        np.maximum(a * lam - theta, 0.0) / (a - 1),
    )
    return out if out.ndim else float(out)


def scad_value(theta, params: ScadParams):
    """Penalty value: the continuous antiderivative of scad_derivative with p(0) = 0."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("penalty argument must be nonnegative")
    lam, a = params.lam, params.a
    if lam == 0:
        out = np.zeros_like(theta)
        return out if out.ndim else 0.0
    quad = -(theta**2 - 2 * a * lam * theta + lam**2) / (2 * (a - 1))
    flat = (a + 1) * lam**2 / 2
    out = np.where(theta <= lam, lam * theta, np.where(theta <= a * lam, quad, flat))
    return out if out.ndim else float(out)


def group_norm(b_j) -> float:
    """Euclidean norm of one coefficient block."""
    return float(np.linalg.norm(np.asarray(b_j, dtype=float)))
