"""Group-SCAD penalized least squares via iterated local quadratic approximation.

The criterion is the centered residual sum of squares plus n times the SCAD
penalty of each predictor's coefficient-block norm. Each iteration replaces
the penalty by its quadratic majorant at the current iterate, giving a
ridge-type closed-form update; blocks whose norm falls below the drop
threshold are set to exactly zero and never revived within one fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from mfreg.funcdata import CurveSet, Grid, ResponseVector
from mfreg.fpca import EigenSystem, ScoreMatrix, build_design
from mfreg.scad import ScadParams, group_norm, scad_derivative, scad_value


@dataclass(frozen=True)
class FitConfig:
    """Solver settings; K and the penalty are the model choices."""

    K: int
    scad: ScadParams = ScadParams(0.0)
    drop_threshold: float = 1e-5
    max_iterations: int = 100
    convergence_tol: float = 1e-6
    ridge_init: float = 1e-8

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.drop_threshold <= 0 or self.max_iterations < 1:
            raise ValueError("drop_threshold and max_iterations must be positive")
        if self.convergence_tol <= 0 or self.ridge_init < 0:
            raise ValueError("convergence_tol must be positive, ridge_init nonnegative")


@dataclass(frozen=True)
class FitResult:
    """Converged (or capped) penalized fit.

    b_hat is the full grouped coefficient vector with dropped blocks exactly
    zero; r_weights holds the converged per-predictor LQA ridge weights needed
    by the sandwich covariance and the hat-matrix trace.
    """

    b_hat: np.ndarray
    active_set: tuple[int, ...]
    intercept: float
    beta_curves: np.ndarray | None
    iterations: int
    converged: bool
    K: int
    n_predictors: int
    y_mean: float
    residuals: np.ndarray
    r_weights: np.ndarray
    criterion_path: tuple[float, ...]
    ridge_used: bool = False
    grid: Grid | None = None
    eigensystems: tuple[EigenSystem, ...] | None = None
    labels: tuple[str, ...] | None = None

    def block(self, j: int) -> np.ndarray:
        return self.b_hat[j * self.K : (j + 1) * self.K]

    def to_dict(self) -> dict:
        d = {
            "n_predictors": self.n_predictors,
            "K": self.K,
            "intercept": self.intercept,
            "active_set": [j + 1 for j in self.active_set],
            "b_hat": [self.block(j).tolist() for j in range(self.n_predictors)],
            "iterations": self.iterations,
            "converged": self.converged,
            "y_mean": self.y_mean,
            "r_weights": self.r_weights.tolist(),
            "ridge_used": self.ridge_used,
        }
        if self.labels is not None:
            d["labels"] = list(self.labels)
        if self.grid is not None:
            d["grid"] = self.grid.points.tolist()
        if self.beta_curves is not None:
            d["beta_curves"] = self.beta_curves.tolist()
        if self.eigensystems is not None:
            d["eigensystems"] = [e.to_dict() for e in self.eigensystems]
        return d


def result_from_dict(d: dict) -> FitResult:
    """Rebuild a serialized fit; enough state for prediction and bands."""
    p, K = d["n_predictors"], d["K"]
    grid = Grid(np.asarray(d["grid"])) if "grid" in d else None
    eigensystems = None
    if "eigensystems" in d:
        eigensystems = tuple(EigenSystem.from_dict(e) for e in d["eigensystems"])
    return FitResult(
        b_hat=np.concatenate([np.asarray(blk, dtype=float) for blk in d["b_hat"]]),
        active_set=tuple(j - 1 for j in d["active_set"]),
        intercept=float(d["intercept"]),
        beta_curves=np.asarray(d["beta_curves"]) if "beta_curves" in d else None,
        iterations=int(d["iterations"]),
        converged=bool(d["converged"]),
        K=K,
        n_predictors=p,
        y_mean=float(d["y_mean"]),
        residuals=np.zeros(0),
        r_weights=np.asarray(d["r_weights"], dtype=float),
        criterion_path=(),
        ridge_used=bool(d.get("ridge_used", False)),
        grid=grid,
        eigensystems=eigensystems,
        labels=tuple(d["labels"]) if "labels" in d else None,
    )


def criterion(b: np.ndarray, Z: np.ndarray, y_centered: np.ndarray, n_groups: int,
              scad: ScadParams) -> float:
    """Penalized criterion: (1/2) ||y_c - Z b||^2 + n * sum_j p(||b_j||).

    The 1/2 on the quadratic term makes the ridge-type update
    (Z^T Z + n R)^-1 Z^T y_c an exact majorize-minimize step for this
    function, so its value is nonincreasing along the iterations.
    """
    n = y_centered.size
    resid = y_centered - Z @ b
    norms = np.linalg.norm(b.reshape(n_groups, -1), axis=1)
    penalty = float(np.sum(scad_value(norms, scad)))
    return float(0.5 * resid @ resid + n * penalty)


def _spd_solve(M: np.ndarray, rhs: np.ndarray, ridge: float) -> tuple[np.ndarray, bool]:
    """Cholesky solve with a ridge retry on numerically singular systems."""
    try:
        c = scipy.linalg.cho_factor(M, check_finite=False)
        return scipy.linalg.cho_solve(c, rhs, check_finite=False), False
    except scipy.linalg.LinAlgError:
        bumped = M + ridge * max(1.0, np.trace(M) / M.shape[0]) * np.eye(M.shape[0])
        c = scipy.linalg.cho_factor(bumped, check_finite=False)
        return scipy.linalg.cho_solve(c, rhs, check_finite=False), True


def lqa_step(Z_active: np.ndarray, y_centered: np.ndarray, b_current: np.ndarray,
             config: FitConfig) -> np.ndarray:
    """One local-quadratic-approximation update on the active columns.

    Solves (Z^T Z + n R) b = Z^T y_c where R is block-diagonal with weight
    p'(||b_j||) / ||b_j|| on each group. Every group of b_current must have
    norm above the drop threshold so the weights are well defined.
    """
    K = config.K
    if b_current.size % K:
        raise ValueError("b_current length must be a multiple of K")
    n_groups = b_current.size // K
    norms = np.array([group_norm(b_current[j * K : (j + 1) * K]) for j in range(n_groups)])
    if np.any(norms <= config.drop_threshold):
        raise ValueError("all groups must exceed the drop threshold before an LQA step")
    n = y_centered.size
    weights = scad_derivative(norms, config.scad) / norms
    M = Z_active.T @ Z_active + n * np.diag(np.repeat(weights, K))
    sol, _ = _spd_solve(M, Z_active.T @ y_centered, config.ridge_init)
    return sol


def fit(Z: ScoreMatrix, y: ResponseVector | np.ndarray, config: FitConfig,
        eigensystems: list[EigenSystem] | None = None,
        mean_curves: list[np.ndarray] | None = None,
        labels: list[str] | None = None) -> FitResult:
    """Minimize the penalized criterion by iterated LQA with group dropping."""
    yv = y.y if isinstance(y, ResponseVector) else np.asarray(y, dtype=float)
    if yv.size != Z.n:
        raise ValueError("response length does not match the score matrix")
    if Z.K != config.K:
        raise ValueError("config K does not match the score matrix block size")
    if eigensystems is not None:
        if len(eigensystems) != Z.n_predictors:
            raise ValueError("need one eigensystem per predictor")
        for eig in eigensystems:
            if eig.K != Z.K:
                raise ValueError("eigensystem truncation does not match K")

    n, p, K = Z.n, Z.n_predictors, Z.K
    y_mean = float(yv.mean())
    yc = yv - y_mean
    X = Z.scores
    ZtZ = X.T @ X
    Ztyc = X.T @ yc

    init, ridge_used = _spd_solve(ZtZ, Ztyc, config.ridge_init)
    B = init.reshape(p, K).copy()
    norms = np.linalg.norm(B, axis=1)
    active_mask = norms >= config.drop_threshold
    B[~active_mask] = 0.0

    path = [criterion(B.ravel(), X, yc, p, config.scad)]
    converged = False
    iterations = 0
    for _ in range(config.max_iterations):
        act = np.flatnonzero(active_mask)
        if act.size == 0:
            converged = True
            break
        cols = (act[:, None] * K + np.arange(K)).ravel()
        norms = np.linalg.norm(B[act], axis=1)
        weights = scad_derivative(norms, config.scad) / norms
        M = ZtZ[np.ix_(cols, cols)] + n * np.diag(np.repeat(weights, K))
        b_new_act, bumped = _spd_solve(M, Ztyc[cols], config.ridge_init)
        ridge_used = ridge_used or bumped

        B_new = np.zeros((p, K))
        B_new[act] = b_new_act.reshape(act.size, K)
        max_change = float(np.max(np.linalg.norm(B_new[act] - B[act], axis=1)))
        new_norms = np.linalg.norm(B_new[act], axis=1)
        dropped = act[new_norms < config.drop_threshold]
        B_new[dropped] = 0.0
        active_mask[dropped] = False
        B = B_new
        iterations += 1
        path.append(criterion(B.ravel(), X, yc, p, config.scad))
        if max_change < config.convergence_tol and dropped.size == 0:
            converged = True
            break
    else:
        converged = not active_mask.any()

    b = B.ravel()
    active = [int(j) for j in np.flatnonzero(active_mask)]
    residuals = yc - X @ b
    r_weights = np.zeros(p)
    if active:
        act_norms = np.linalg.norm(B[active], axis=1)
        r_weights[active] = scad_derivative(act_norms, config.scad) / act_norms

    grid = eigensystems[0].grid if eigensystems else None
    beta_curves = None
    if eigensystems is not None:
        beta_curves = np.zeros((p, grid.n_points))
        for j in active:
            beta_curves[j] = b[j * K : (j + 1) * K] @ eigensystems[j].eigenfunctions

    a_hat = y_mean
    if beta_curves is not None and mean_curves is not None:
        a_hat = intercept(yv, beta_curves, mean_curves, grid)

    return FitResult(
        b_hat=b,
        active_set=tuple(active),
        intercept=a_hat,
        beta_curves=beta_curves,
        iterations=iterations,
        converged=converged,
        K=K,
        n_predictors=p,
        y_mean=y_mean,
        residuals=residuals,
        r_weights=r_weights,
        criterion_path=tuple(path),
        ridge_used=ridge_used,
        grid=grid,
        eigensystems=tuple(eigensystems) if eigensystems is not None else None,
        labels=tuple(labels) if labels is not None else None,
    )


def intercept(y, beta_curves: np.ndarray, mean_curves, grid: Grid) -> float:
    """Mean response minus the quadrature pairings of coefficients with mean curves."""
    yv = y.y if isinstance(y, ResponseVector) else np.asarray(y, dtype=float)
    a = float(yv.mean())
    for beta_j, mean_j in zip(beta_curves, mean_curves):
        a -= grid.inner_product(beta_j, mean_j)
    return a


def fit_curves(curve_sets: list[CurveSet], y: ResponseVector, config: FitConfig,
               fast: bool = True) -> FitResult:
    """Full pipeline from raw curves: center, FPCA, scores, penalized fit."""
    Z, eigs, means, _ = build_design(curve_sets, config.K, fast=fast)
    return fit(Z, y, config, eigensystems=eigs, mean_curves=means,
               labels=[cs.label for cs in curve_sets])


def predict(result: FitResult, curve_sets: list[CurveSet]) -> ResponseVector:
    """Predicted responses for new curves sampled on the training grid."""
    if result.beta_curves is None or result.grid is None:
        raise ValueError("fit carries no coefficient curves; refit with eigensystems")
    if len(curve_sets) != result.n_predictors:
        raise ValueError("wrong number of predictors")
    n = curve_sets[0].n
    yhat = np.full(n, result.intercept)
    for j, cs in enumerate(curve_sets):
        if cs.grid.n_points != result.grid.n_points or np.max(
            np.abs(cs.grid.points - result.grid.points)
        ) > 1e-12:
            raise ValueError("prediction curves must be on the training grid")
        yhat += result.grid.weight * (cs.values @ result.beta_curves[j])
    return ResponseVector(yhat)
