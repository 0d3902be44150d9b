"""Sandwich covariance for selected coefficient blocks and pointwise bands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.stats import norm

from mfreg.funcdata import Grid
from mfreg.solver import FitResult


@dataclass(frozen=True)
class CoefCovariance:
    """Diagonal K x K covariance blocks of the selected coefficient vector."""

    blocks: dict[int, np.ndarray]  # active predictor index (0-based) -> K x K
    full: np.ndarray  # covariance of the stacked selected coefficients

    def __post_init__(self):
        for j, blk in self.blocks.items():
            if np.max(np.abs(blk - blk.T)) > 1e-12 * max(1.0, np.max(np.abs(blk))):
                raise ValueError(f"covariance block for predictor {j} is not symmetric")


@dataclass(frozen=True)
class ConfidenceBand:
    """Pointwise interval center(t) +/- half_width(t) at the given level."""

    grid: Grid
    center: np.ndarray
    half_width: np.ndarray
    level: float

    def __post_init__(self):
        if np.any(self.half_width < 0):
            raise ValueError("half widths must be nonnegative")

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_width

    def at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Linear interpolation of (center, half width) at arbitrary points."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (np.interp(t, self.grid.points, self.center),
                np.interp(t, self.grid.points, self.half_width))


def sandwich_covariance(Z_active: np.ndarray, r_diag: np.ndarray,
                        residuals: np.ndarray, n: int, K: int,
                        active_set: tuple[int, ...]) -> CoefCovariance:
    """Robust covariance of the selected coefficients.

    Z_active holds the selected score columns; r_diag is the diagonal of the
    converged LQA weight matrix on those columns. The bread is the penalized
    Gram matrix, the meat weights each observation by its squared residual.
    """
    if Z_active.ndim != 2 or Z_active.shape[1] == 0:
        raise ValueError("empty active set has no coefficient covariance")
    if Z_active.shape[1] != len(active_set) * K:
        raise ValueError("Z_active width must equal K times the active-set size")
    M = Z_active.T @ Z_active + n * np.diag(r_diag)
    meat = (Z_active * residuals[:, None] ** 2).T @ Z_active
    c = scipy.linalg.cho_factor(M, check_finite=False)
    half = scipy.linalg.cho_solve(c, meat, check_finite=False)
    full = scipy.linalg.cho_solve(c, half.T, check_finite=False).T
    full = 0.5 * (full + full.T)
    blocks = {
        j: full[pos * K : (pos + 1) * K, pos * K : (pos + 1) * K]
        for pos, j in enumerate(active_set)
    }
    return CoefCovariance(blocks, full)


def covariance_for_fit(fit: FitResult, Z_scores: np.ndarray) -> CoefCovariance:
    """Sandwich covariance at a converged fit, given the full score matrix."""
    if not fit.active_set:
        raise ValueError("empty active set has no coefficient covariance")
    K = fit.K
    cols = np.concatenate([np.arange(j * K, (j + 1) * K) for j in fit.active_set])
    r_diag = np.repeat(fit.r_weights[list(fit.active_set)], K)
    return sandwich_covariance(Z_scores[:, cols], r_diag, fit.residuals,
                               Z_scores.shape[0], K, fit.active_set)


def pointwise_band(fit: FitResult, cov: CoefCovariance, j: int,
                   level: float = 0.95) -> ConfidenceBand:
    """Pointwise confidence band for the coefficient curve of active predictor j."""
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    if j not in fit.active_set:
        raise ValueError(f"predictor {j} is not in the active set")
    if fit.eigensystems is None or fit.beta_curves is None:
        raise ValueError("fit carries no eigensystems; refit with them attached")
    phi = fit.eigensystems[j].eigenfunctions  # K x G
    block = cov.blocks[j]
    var = np.einsum("kg,kl,lg->g", phi, block, phi)
    var = np.maximum(var, 0.0)
    z = float(norm.ppf(0.5 + level / 2))
    return ConfidenceBand(fit.grid, fit.beta_curves[j].copy(), z * np.sqrt(var), level)


def coverage_eval(true_values: np.ndarray, bands: list[ConfidenceBand],
                  eval_points: np.ndarray) -> float | None:
    """Fraction of (replicate, point) pairs where the truth lies in the band.

    true_values gives the true curve at eval_points; bands holds one band per
    replicate in which the predictor was selected. Returns None when the
    predictor was never selected (coverage undefined, distinct from 0).
    """
    if not bands:
        return None
    true_values = np.asarray(true_values, dtype=float)
    eval_points = np.asarray(eval_points, dtype=float)
    hits = 0
    total = 0
    for band in bands:
        c, hw = band.at(eval_points)
        hits += int(np.sum((true_values >= c - hw) & (true_values <= c + hw)))
        total += eval_points.size
    return hits / total
