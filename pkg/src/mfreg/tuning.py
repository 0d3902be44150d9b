"""Generalized cross-validation over the truncation level and penalty grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from mfreg.funcdata import CurveSet, ResponseVector
from mfreg.fpca import ScoreMatrix, build_design
from mfreg.scad import ScadParams
from mfreg.solver import FitConfig, FitResult, fit


class DegenerateFitError(RuntimeError):
    """Hat-matrix trace at or above n; the GCV denominator vanishes."""


@dataclass(frozen=True)
class TuningCell:
    K: int
    lam: float
    gcv: float
    active_size: int
    converged: bool


@dataclass(frozen=True)
class TuningGrid:
    """Audit table of every (K, lambda) pair evaluated by the selector."""

    K_values: tuple[int, ...]
    lambda_values: tuple[float, ...]
    results: tuple[TuningCell, ...]

    def to_rows(self) -> list[list]:
        rows = [["K", "lambda", "gcv", "active_size", "converged"]]
        for c in self.results:
            rows.append([c.K, c.lam, c.gcv, c.active_size, c.converged])
        return rows


def hat_trace(fit_result: FitResult, Z: ScoreMatrix) -> float:
    """Trace of Z_act (Z_act^T Z_act + n R_act)^-1 Z_act^T without forming H.

    Dropped columns contribute nothing; the weight matrix R uses the
    converged block norms.
    """
    if not fit_result.active_set:
        return 0.0
    K = Z.K
    cols = np.concatenate(
        [np.arange(j * K, (j + 1) * K) for j in fit_result.active_set]
    )
    Za = Z.scores[:, cols]
    r_diag = np.repeat(fit_result.r_weights[list(fit_result.active_set)], K)
    M = Za.T @ Za + Z.n * np.diag(r_diag)
    c = scipy.linalg.cho_factor(M, check_finite=False)
    S = scipy.linalg.cho_solve(c, Za.T @ Za, check_finite=False)
    return float(np.trace(S))


def gcv_score(fit_result: FitResult, Z: ScoreMatrix, y, config: FitConfig) -> float:
    """Mean squared centered residual divided by (1 - tr(H)/n)^2."""
    yv = y.y if isinstance(y, ResponseVector) else np.asarray(y, dtype=float)
    n = yv.size
    tr = hat_trace(fit_result, Z)
    if tr >= n:
        raise DegenerateFitError(f"hat-matrix trace {tr:.3f} >= n = {n}")
    rss = float(fit_result.residuals @ fit_result.residuals)
    return rss / n / (1.0 - tr / n) ** 2


def default_lambda_grid(Z: ScoreMatrix, y, n_points: int = 30,
                        ratio: float = 1e-3) -> np.ndarray:
    """Decreasing log grid from the smallest lambda that kills every group.

    The upper end is max_j ||Z_j^T (y - ybar)|| / n, the group-penalty bound
    at which the first LQA step from zero would drop all predictors.
    """
    yv = y.y if isinstance(y, ResponseVector) else np.asarray(y, dtype=float)
    yc = yv - yv.mean()
    lam_max = max(
        float(np.linalg.norm(Z.block(j).T @ yc)) for j in range(Z.n_predictors)
    ) / yv.size
    if lam_max <= 0:
        lam_max = 1.0
    return np.geomspace(lam_max, ratio * lam_max, n_points)


def select(Zs_by_K: dict[int, ScoreMatrix], y, lambda_values,
           base_config: FitConfig | None = None,
           eigensystems_by_K: dict[int, list] | None = None,
           mean_curves: list | None = None,
           labels: list[str] | None = None):
    """Joint grid search over K and lambda minimizing GCV.

    Evaluates every pair with a cold-started fit; ties break toward smaller K
    and then larger lambda. Returns (best K, best lambda, FitResult at the
    winner, TuningGrid).
    """
    K_values = sorted(Zs_by_K)
    lambda_values = [float(v) for v in lambda_values]
    if not K_values or not lambda_values:
        raise ValueError("both tuning grids must be nonempty")
    cells = []
    best = None  # (gcv, K, -lam) ordering key
    best_fit = None
    for K in K_values:
        Z = Zs_by_K[K]
        eigs = eigensystems_by_K[K] if eigensystems_by_K is not None else None
        for lam in sorted(lambda_values, reverse=True):
            cfg = _with(base_config, K, lam)
            fr = fit(Z, y, cfg, eigensystems=eigs, mean_curves=mean_curves,
                     labels=labels)
            try:
                score = gcv_score(fr, Z, y, cfg)
            except DegenerateFitError:
                cells.append(TuningCell(K, lam, float("inf"), len(fr.active_set),
                                        fr.converged))
                continue
            cells.append(TuningCell(K, lam, score, len(fr.active_set), fr.converged))
            key = (score, K, -lam)
            if best is None or key < best:
                best = key
                best_fit = fr
    if best_fit is None:
        raise DegenerateFitError(
            "every (K, lambda) pair was degenerate; tuning table attached"
        )
    grid = TuningGrid(tuple(K_values), tuple(lambda_values), tuple(cells))
    return best[1], -best[2], best_fit, grid


def _with(base: FitConfig | None, K: int, lam: float) -> FitConfig:
    if base is None:
        return FitConfig(K=K, scad=ScadParams(lam))
    return FitConfig(K=K, scad=ScadParams(lam, base.scad.a),
                     drop_threshold=base.drop_threshold,
                     max_iterations=base.max_iterations,
                     convergence_tol=base.convergence_tol,
                     ridge_init=base.ridge_init)


def select_curves(curve_sets: list[CurveSet], y: ResponseVector,
                  K_values=range(1, 9), lambda_values=None,
                  base_config: FitConfig | None = None, fast: bool = True):
    """GCV selection starting from raw curves.

    Eigensystems are computed once at the largest K and truncated for the
    smaller ones; the default lambda grid is derived at the largest K.
    """
    K_values = sorted(K_values)
    K_max = K_values[-1]
    Z_max, eigs_max, means, _ = build_design(curve_sets, K_max, fast=fast)
    if lambda_values is None:
        lambda_values = default_lambda_grid(Z_max, y)
    Zs = {K: Z_max.truncate(K) for K in K_values}
    eigs = {K: [e.truncate(K) for e in eigs_max] for K in K_values}
    labels = [cs.label for cs in curve_sets]
    return select(Zs, y, lambda_values, base_config=base_config,
                  eigensystems_by_K=eigs, mean_curves=means, labels=labels)
