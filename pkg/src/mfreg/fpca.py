"""Principal component analysis of curve sets.

Per predictor: empirical covariance operator, top-K eigenpairs under the grid
quadrature, score extraction, and assembly of the blocked score design matrix.
Also provides the block-diagonal cross-covariance matrix diagnostic used to
check that the mixing of latent processes is not rank deficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from mfreg.funcdata import CurveSet, Grid, center


@dataclass(frozen=True)
class EigenSystem:
    """Top-K eigenpairs of one predictor's covariance operator.

    Eigenfunctions are sampled on the grid, orthonormal under the grid
    quadrature, and sign-normalized so the entry of largest absolute value is
    positive (earliest grid index on ties).
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # K x G

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float)
        funcs = np.asarray(self.eigenfunctions, dtype=float)
        if funcs.shape != (vals.size, self.grid.n_points):
            raise ValueError("eigenfunctions must be K x G on the grid")
        if np.any(np.diff(vals) > 1e-12):
            raise ValueError("eigenvalues must be nonincreasing")
        if np.any(vals < -1e-10):
            raise ValueError("eigenvalues must be nonnegative")
        vals = np.maximum(vals, 0.0)
        vals.flags.writeable = False
        funcs = funcs.copy()
        funcs.flags.writeable = False
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenfunctions", funcs)

    @property
    def K(self) -> int:
        return self.eigenvalues.size

    def truncate(self, K: int) -> "EigenSystem":
        if K > self.K:
            raise ValueError(f"cannot truncate to K={K}, only {self.K} components")
        return EigenSystem(self.grid, self.eigenvalues[:K], self.eigenfunctions[:K])

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.points.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EigenSystem":
        return cls(Grid(np.asarray(d["grid"])), np.asarray(d["eigenvalues"]),
                   np.asarray(d["eigenfunctions"]))


@dataclass(frozen=True)
class ScoreMatrix:
    """n x pK design of estimated scores, p contiguous blocks of K columns."""

    scores: np.ndarray
    n_predictors: int
    K: int

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 2 or s.shape[1] != self.n_predictors * self.K:
            raise ValueError("score matrix width must equal p * K")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def block(self, j: int) -> np.ndarray:
        """Columns of predictor j (0-based)."""
        return self.scores[:, j * self.K : (j + 1) * self.K]

    def block_slice(self, j: int) -> slice:
        return slice(j * self.K, (j + 1) * self.K)

    def truncate(self, K: int) -> "ScoreMatrix":
        """Keep the leading K score columns of every predictor block."""
        if K > self.K:
            raise ValueError(f"cannot truncate to K={K}, blocks have {self.K} columns")
        cols = np.concatenate(
            [np.arange(j * self.K, j * self.K + K) for j in range(self.n_predictors)]
        )
        return ScoreMatrix(self.scores[:, cols], self.n_predictors, K)

    def restrict(self, predictors) -> "ScoreMatrix":
        """Keep only the given predictor blocks (0-based indices, in order)."""
        cols = np.concatenate(
            [np.arange(j * self.K, (j + 1) * self.K) for j in predictors]
        )
        return ScoreMatrix(self.scores[:, cols], len(list(predictors)), self.K)


@dataclass(frozen=True)
class LambdaMatrix:
    """pK x pK blocked cross-covariance matrix of leading scores."""

    entries: np.ndarray
    n_predictors: int
    K: int

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        pk = self.n_predictors * self.K
        if e.shape != (pk, pk):
            raise ValueError("entries must be pK x pK")
        if np.max(np.abs(e - e.T)) > 1e-12 * max(1.0, np.max(np.abs(e))):
            raise ValueError("entries must be symmetric")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)


def empirical_covariance(centered: CurveSet) -> np.ndarray:
    """G x G sample covariance of centered curves, (1/n) X^T X."""
    if centered.n == 0:
        raise ValueError("cannot form covariance of an empty curve set")
    X = centered.values
    cov = X.T @ X / centered.n
    return 0.5 * (cov + cov.T)


def _sign_normalize(funcs: np.ndarray) -> np.ndarray:
    """Flip each row so its entry of largest absolute value is positive."""
    out = funcs.copy()
    for k in range(out.shape[0]):
        idx = int(np.argmax(np.abs(out[k])))
        if out[k, idx] < 0:
            out[k] = -out[k]
    return out


def eigendecompose(cov: np.ndarray, grid: Grid, K: int) -> EigenSystem:
    """Top-K eigenpairs of the covariance operator discretized on the grid.

    The integral operator is discretized as weight * cov; eigenvectors are
    rescaled so eigenfunctions have unit L2 norm under the quadrature.
    """
    cov = np.asarray(cov, dtype=float)
    G = grid.n_points
    if cov.shape != (G, G):
        raise ValueError("covariance must be G x G on the given grid")
    if np.max(np.abs(cov - cov.T)) > 1e-8 * max(1.0, np.max(np.abs(cov))):
        raise ValueError("covariance must be symmetric")
    if K < 1 or K > G:
        raise ValueError(f"K={K} out of range 1..{G}")
    w, v = scipy.linalg.eigh(grid.weight * cov, subset_by_index=[G - K, G - 1])
    w = w[::-1]
    v = v[:, ::-1]
    lead = w[0] if w.size else 0.0
    if lead > 0 and w[-1] < 1e-12 * lead:
        rank = int(np.sum(w >= 1e-12 * lead))
        raise ValueError(
            f"requested K={K} exceeds the numerical rank {rank} of the covariance"
        )
    w = np.where(np.abs(w) < 1e-12 * max(lead, 1e-300), 0.0, np.maximum(w, 0.0))
    funcs = _sign_normalize(v.T * np.sqrt(G))
    return EigenSystem(grid, w, funcs)


def eigendecompose_curves(centered: CurveSet, K: int) -> EigenSystem:
    """Same eigenpairs as eigendecompose(empirical_covariance(...), ...).

    Works through the n x n Gram matrix, which is much cheaper when n < G.
    Only eigenpairs with strictly positive eigenvalue can be recovered this
    way, so K must not exceed the numerical rank.
    """
    X = centered.values
    n, G = X.shape
    if K < 1 or K > min(n, G):
        raise ValueError(f"K={K} out of range 1..{min(n, G)}")
    gram = (X @ X.T) * (centered.grid.weight / n)
    gram = 0.5 * (gram + gram.T)
    w, u = scipy.linalg.eigh(gram, subset_by_index=[n - K, n - 1])
    w = w[::-1]
    u = u[:, ::-1]
    lead = w[0] if w.size else 0.0
    if lead <= 0 or w[-1] < 1e-12 * lead:
        raise ValueError(f"requested K={K} exceeds the numerical rank of the data")
    funcs = (X.T @ u).T / np.sqrt(n * w)[:, None]
    return EigenSystem(centered.grid, w, _sign_normalize(funcs))


def scores(centered: CurveSet, eig: EigenSystem) -> np.ndarray:
    """n x K block of estimated scores: quadrature pairings with eigenfunctions."""
    if centered.grid.n_points != eig.grid.n_points or np.max(
        np.abs(centered.grid.points - eig.grid.points)
    ) > 1e-12:
        raise ValueError("curve set and eigensystem are on different grids")
    return centered.grid.weight * (centered.values @ eig.eigenfunctions.T)


def assemble_design(blocks: list[np.ndarray]) -> ScoreMatrix:
    """Concatenate per-predictor score blocks into the full design."""
    if not blocks:
        raise ValueError("no score blocks given")
    n, K = blocks[0].shape
    for b in blocks:
        if b.shape != (n, K):
            raise ValueError("all score blocks must share n and K")
    return ScoreMatrix(np.hstack(blocks), len(blocks), K)


def build_design(curve_sets: list[CurveSet], K: int, fast: bool = True):
    """Center each predictor, extract top-K scores, and assemble the design.

    Returns (ScoreMatrix, eigensystems, mean curves, centered curve sets).
    """
    if not curve_sets:
        raise ValueError("no predictors given")
    n = curve_sets[0].n
    grid = curve_sets[0].grid
    eigs, means, centered_sets, blocks = [], [], [], []
    for cs in curve_sets:
        if cs.n != n:
            raise ValueError("curve sets disagree on the number of subjects")
        if cs.grid.n_points != grid.n_points or np.max(
            np.abs(cs.grid.points - grid.points)
        ) > 1e-12:
            raise ValueError("all predictors must share one grid")
        centered, mean = center(cs)
        if fast and n < grid.n_points:
            eig = eigendecompose_curves(centered, K)
        else:
            eig = eigendecompose(empirical_covariance(centered), grid, K)
        eigs.append(eig)
        means.append(mean)
        centered_sets.append(centered)
        blocks.append(scores(centered, eig))
    return assemble_design(blocks), eigs, means, centered_sets


def lambda_diagnostic(mixing: np.ndarray, spectrum: np.ndarray, K: int):
    """Blocked score cross-covariance for linearly mixed latent processes.

    mixing is p x l (row i gives the loadings of predictor i on the l latent
    processes); spectrum is the latent score variances, either length-K
    (shared by all processes) or l x K. Block (i1, i2) is diagonal with k-th
    entry sum_j mixing[i1, j] * mixing[i2, j] * spectrum[j, k]. Returns the
    assembled matrix and its minimum eigenvalue.
    """
    A = np.atleast_2d(np.asarray(mixing, dtype=float))
    p, l = A.shape
    spec = np.asarray(spectrum, dtype=float)
    if spec.ndim == 1:
        if spec.size < K:
            raise ValueError("spectrum shorter than K")
        spec = np.tile(spec[:K], (l, 1))
    else:
        if spec.shape[0] != l or spec.shape[1] < K:
            raise ValueError("spectrum must be l x K")
        spec = spec[:, :K]
    if np.any(spec <= 0):
        raise ValueError("spectrum entries must be strictly positive")
    lam = np.zeros((p * K, p * K))
    for i1 in range(p):
        for i2 in range(p):
            diag = A[i1] @ (spec * A[i2][:, None])
            lam[i1 * K : (i1 + 1) * K, i2 * K : (i2 + 1) * K] = np.diag(diag)
    lam = 0.5 * (lam + lam.T)
    min_eig = float(scipy.linalg.eigh(lam, eigvals_only=True, subset_by_index=[0, 0])[0])
    return LambdaMatrix(lam, p, K), min_eig
