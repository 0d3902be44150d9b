import numpy as np
import pytest

from mfreg.funcdata import CurveSet, Grid, center
from mfreg.fpca import (EigenSystem, LambdaMatrix, ScoreMatrix, assemble_design,
                        build_design, eigendecompose, eigendecompose_curves,
                        empirical_covariance, lambda_diagnostic, scores)


@pytest.fixture
def grid():
    return Grid.uniform(200)


def rank2_curves(grid, n=150, sd1=2.0, sd2=0.5, seed=4):
    """Curves spanned by two orthonormal cosine functions with known scales."""
    rng = np.random.default_rng(seed)
    f1 = np.ones(grid.n_points)
    f2 = np.sqrt(2) * np.cos(np.pi * grid.points)
    a = rng.normal(0, sd1, n)
    b = rng.normal(0, sd2, n)
    return CurveSet(grid, np.outer(a, f1) + np.outer(b, f2)), f1, f2


class TestEmpiricalCovariance:
    def test_single_known_curve(self, grid):
        f = np.sin(2 * np.pi * grid.points)
        c = CurveSet(grid, f[None, :])
        np.testing.assert_allclose(empirical_covariance(c), np.outer(f, f),
                                   atol=1e-12)

    def test_symmetry(self, grid):
        rng = np.random.default_rng(5)
        cov = empirical_covariance(CurveSet(grid, rng.normal(size=(9, 200))))
        np.testing.assert_allclose(cov, cov.T)

    def test_empty(self, grid):
        with pytest.raises(ValueError):
            empirical_covariance(CurveSet(grid, np.zeros((0, 200))))


class TestEigendecompose:
    def test_recovers_planted_components(self, grid):
        c, f1, f2 = rank2_curves(grid)
        centered, _ = center(c)
        eig = eigendecompose(empirical_covariance(centered), grid, 2)
        # eigenfunctions match the planted ones up to sign and sampling error
        err1 = min(grid.integrate((eig.eigenfunctions[0] - s * f1) ** 2)
                   for s in (1, -1))
        err2 = min(grid.integrate((eig.eigenfunctions[1] - s * f2) ** 2)
                   for s in (1, -1))
        assert err1 < 1e-2 and err2 < 1e-2
        assert eig.eigenvalues[0] > eig.eigenvalues[1] > 0

    def test_orthonormal_under_quadrature(self, grid):
        rng = np.random.default_rng(6)
        c = CurveSet(grid, rng.normal(size=(50, 200)))
        centered, _ = center(c)
        eig = eigendecompose(empirical_covariance(centered), grid, 6)
        gram = grid.weight * (eig.eigenfunctions @ eig.eigenfunctions.T)
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-10)

    def test_score_variance_identity(self, grid):
        """Empirical covariance of estimated scores equals diag(eigenvalues)."""
        rng = np.random.default_rng(7)
        c = CurveSet(grid, rng.normal(size=(60, 200)))
        centered, _ = center(c)
        eig = eigendecompose(empirical_covariance(centered), grid, 5)
        xi = scores(centered, eig)
        emp = xi.T @ xi / centered.n
        np.testing.assert_allclose(emp, np.diag(eig.eigenvalues), atol=1e-10)

    def test_sign_convention(self, grid):
        c, _, _ = rank2_curves(grid)
        centered, _ = center(c)
        eig = eigendecompose(empirical_covariance(centered), grid, 2)
        for row in eig.eigenfunctions:
            assert row[np.argmax(np.abs(row))] > 0

    def test_rank_error(self, grid):
        c, _, _ = rank2_curves(grid, n=40)
        centered, _ = center(c)
        with pytest.raises(ValueError, match="rank"):
            eigendecompose(empirical_covariance(centered), grid, 10)

    def test_zero_operator_all_zero_eigenvalues(self, grid):
        eig = eigendecompose(np.zeros((200, 200)), grid, 3)
        np.testing.assert_allclose(eig.eigenvalues, 0.0)

    def test_asymmetric_rejected(self, grid):
        cov = np.zeros((200, 200))
        cov[0, 1] = 1.0
        with pytest.raises(ValueError):
            eigendecompose(cov, grid, 1)


class TestGramPath:
    def test_matches_dense_path(self):
        grid = Grid.uniform(300)
        rng = np.random.default_rng(8)
        c = CurveSet(grid, rng.normal(size=(40, 300)))
        centered, _ = center(c)
        dense = eigendecompose(empirical_covariance(centered), grid, 6)
        fast = eigendecompose_curves(centered, 6)
        np.testing.assert_allclose(fast.eigenvalues, dense.eigenvalues,
                                   rtol=1e-8)
        np.testing.assert_allclose(fast.eigenfunctions, dense.eigenfunctions,
                                   atol=1e-6)

    def test_rank_error(self, grid):
        c, _, _ = rank2_curves(grid, n=30)
        centered, _ = center(c)
        with pytest.raises(ValueError):
            eigendecompose_curves(centered, 20)


class TestEigenSystem:
    def test_truncate(self, grid):
        c, _, _ = rank2_curves(grid)
        centered, _ = center(c)
        eig = eigendecompose_curves(centered, 2)
        top = eig.truncate(1)
        assert top.K == 1
        np.testing.assert_allclose(top.eigenfunctions, eig.eigenfunctions[:1])
        with pytest.raises(ValueError):
            eig.truncate(3)

    def test_dict_round_trip(self, grid):
        c, _, _ = rank2_curves(grid)
        centered, _ = center(c)
        eig = eigendecompose_curves(centered, 2)
        back = EigenSystem.from_dict(eig.to_dict())
        np.testing.assert_allclose(back.eigenvalues, eig.eigenvalues)
        np.testing.assert_allclose(back.eigenfunctions, eig.eigenfunctions)

    def test_rejects_increasing_eigenvalues(self, grid):
        with pytest.raises(ValueError):
            EigenSystem(grid, np.array([1.0, 2.0]), np.ones((2, 200)))


class TestScoreMatrix:
    def test_block_layout(self):
        s = ScoreMatrix(np.arange(12.0).reshape(2, 6), 3, 2)
        np.testing.assert_allclose(s.block(1), [[2, 3], [8, 9]])

    def test_truncate_keeps_leading_columns(self):
        s = ScoreMatrix(np.arange(12.0).reshape(2, 6), 3, 2)
        t = s.truncate(1)
        np.testing.assert_allclose(t.scores, [[0, 2, 4], [6, 8, 10]])
        assert t.K == 1 and t.n_predictors == 3

    def test_restrict(self):
        s = ScoreMatrix(np.arange(12.0).reshape(2, 6), 3, 2)
        r = s.restrict([0, 2])
        np.testing.assert_allclose(r.scores, [[0, 1, 4, 5], [6, 7, 10, 11]])
        assert r.n_predictors == 2

    def test_bad_width(self):
        with pytest.raises(ValueError):
            ScoreMatrix(np.zeros((4, 5)), 2, 2)


class TestAssembleDesign:
    def test_shapes_and_order(self):
        b1 = np.ones((5, 2))
        b2 = 2 * np.ones((5, 2))
        design = assemble_design([b1, b2])
        assert design.scores.shape == (5, 4)
        np.testing.assert_allclose(design.block(1), b2)

    def test_mismatched_blocks(self):
        with pytest.raises(ValueError):
            assemble_design([np.ones((5, 2)), np.ones((4, 2))])


class TestBuildDesign:
    def test_pipeline_consistency(self, grid):
        c1, _, _ = rank2_curves(grid, seed=12)
        c2, _, _ = rank2_curves(grid, seed=13)
        Z, eigs, means, centered = build_design([c1, c2], 2)
        assert Z.scores.shape == (150, 4)
        assert len(eigs) == len(means) == len(centered) == 2
        np.testing.assert_allclose(Z.block(0), scores(centered[0], eigs[0]))

    def test_fast_and_dense_agree(self, grid):
        c1, _, _ = rank2_curves(grid, seed=14)
        Z_fast, _, _, _ = build_design([c1], 2, fast=True)
        Z_dense, _, _, _ = build_design([c1], 2, fast=False)
        np.testing.assert_allclose(Z_fast.scores, Z_dense.scores, atol=1e-8)

    def test_subject_count_mismatch(self, grid):
        c1 = CurveSet(grid, np.random.default_rng(0).normal(size=(5, 200)))
        c2 = CurveSet(grid, np.random.default_rng(1).normal(size=(6, 200)))
        with pytest.raises(ValueError):
            build_design([c1, c2], 1)


class TestLambdaDiagnostic:
    def test_identity_mixing(self):
        spectrum = np.array([1.0, 0.25, 1 / 9])
        lam, min_eig = lambda_diagnostic(np.eye(2), spectrum, 3)
        np.testing.assert_allclose(lam.entries,
                                   np.diag(np.tile(spectrum, 2)))
        assert min_eig == pytest.approx(1 / 9)

    def test_scalar_multiple_rows_singular(self):
        mixing = np.array([[1.0, 2.0], [2.0, 4.0]])
        _, min_eig = lambda_diagnostic(mixing, np.array([1.0, 0.5]), 2)
        assert abs(min_eig) < 1e-10

    def test_block_structure(self):
        mixing = np.array([[1.0, 0.3], [0.3, 1.0]])
        spectrum = np.array([1.0, 0.25])
        lam, _ = lambda_diagnostic(mixing, spectrum, 2)
        off = lam.entries[:2, 2:]
        coef = float(np.dot(mixing[0], mixing[1]))
        np.testing.assert_allclose(off, coef * np.diag(spectrum))

    def test_nonpositive_spectrum(self):
        with pytest.raises(ValueError):
            lambda_diagnostic(np.eye(2), np.array([1.0, 0.0]), 2)

    def test_symmetry_validation(self):
        with pytest.raises(ValueError):
            LambdaMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]), 1, 2)
