import numpy as np
import pytest
from reference import central_diff_gradient, naive_objective, random_dataset, smooth_logistic_value

from proxcsl import (
    LabeledDataset,
    Regularization,
    SparseDesignMatrix,
    csl_objective,
    curvature_at,
    local_gradient,
    local_objective,
    logistic_loss,
    nnz,
)

LOG2 = float(np.log(2.0))


class TestLogisticLoss:
    def test_zero_margin(self):
        assert logistic_loss(0, 0.0) == pytest.approx(LOG2, abs=1e-12)
        assert logistic_loss(1, 0.0) == pytest.approx(LOG2, abs=1e-12)

    def test_large_margin_no_overflow(self):
        # log(1 + e^z) - z -> 0 as z grows; must not overflow on the way.
        val = logistic_loss(1, 1000.0)
        assert np.isfinite(val)
        assert 0.0 <= val < 1e-12

    def test_large_negative_margin(self):
        val = logistic_loss(0, -1000.0)
        assert 0.0 <= val < 1e-12

    def test_vectorized(self):
        z = np.array([-2.0, 0.0, 3.0])
        y = np.array([0.0, 1.0, 1.0])
        expected = np.log1p(np.exp(z)) - y * z
        assert np.allclose(logistic_loss(y, z), expected, atol=1e-12)


class TestLocalObjective:
    def test_zero_weights_gives_log2(self, rng):
        ds, _, _ = random_dataset(rng, 30, 6)
        assert local_objective(ds, np.zeros(6), Regularization(0.5)) == pytest.approx(LOG2)

    def test_penalty_additivity(self, rng):
        ds, X, y = random_dataset(rng, 25, 5)
        w = np.array([0.4, -0.3, 0.0, 0.2, -0.1])
        assert abs(np.abs(w).sum() - 1.0) < 1e-12
        lam = 50.0
        base = local_objective(ds, w, Regularization(0.0))
        assert local_objective(ds, w, Regularization(lam)) == pytest.approx(base + lam)

    def test_matches_naive_double_loop(self, rng):
        for _ in range(5):
            ds, X, y = random_dataset(rng, 17, 7)
            w = rng.standard_normal(7)
            reg = Regularization(0.3, 0.05)
            mine = local_objective(ds, w, reg)
            oracle = naive_objective(X, y, w, reg.lambda1, reg.lambda2)
            assert mine == pytest.approx(oracle, rel=1e-12)


class TestLocalGradient:
    def test_at_zero(self, rng):
        ds, X, y = random_dataset(rng, 40, 6)
        g = local_gradient(ds, np.zeros(6)).g
        assert np.allclose(g, X.T @ (0.5 - y) / 40, atol=1e-14)

    def test_finite_difference_match(self, rng):
        for _ in range(10):
            n, d = int(rng.integers(5, 50)), int(rng.integers(2, 20))
            ds, X, y = random_dataset(rng, n, d)
            w = rng.standard_normal(d) * 0.5
            reg = Regularization(0.0, 0.1)
            g = local_gradient(ds, w, reg).g
            fd = central_diff_gradient(lambda v: smooth_logistic_value(X, y, v, reg.lambda2), w)
            assert np.max(np.abs(g - fd)) < 1e-5

    def test_empty_column_gradient_is_ridge_term(self, rng):
        X = np.array([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0]])
        y = np.array([1.0, 0.0, 1.0])
        ds = LabeledDataset(SparseDesignMatrix.from_dense(X), y)
        w = np.array([0.3, -0.7])
        lam2 = 0.25
        g = local_gradient(ds, w, Regularization(0.0, lam2)).g
        assert g[1] == pytest.approx(lam2 * w[1], abs=1e-14)

    def test_snapshot_records_point(self, rng):
        ds, _, _ = random_dataset(rng, 10, 3)
        w = np.array([1.0, 2.0, 3.0])
        snap = local_gradient(ds, w)
        assert np.array_equal(snap.at, w)
        w[0] = -5.0
        assert snap.at[0] == 1.0


class TestCslObjective:
    def test_reduces_to_local_objective(self, rng):
        ds, _, _ = random_dataset(rng, 20, 5)
        w = rng.standard_normal(5)
        anchor = rng.standard_normal(5)
        reg = Regularization(0.2, 0.03)
        val = csl_objective(ds, w, anchor, np.zeros(5), 0.0, reg)
        assert val == pytest.approx(local_objective(ds, w, reg), rel=1e-14)

    def test_single_partition_form(self, rng):
        ds, _, _ = random_dataset(rng, 20, 5)
        w = rng.standard_normal(5)
        anchor = rng.standard_normal(5)
        alpha = 0.7
        reg = Regularization(0.1)
        val = csl_objective(ds, w, anchor, np.zeros(5), alpha, reg)
        expected = local_objective(ds, w, reg) + 0.5 * alpha * np.sum((w - anchor) ** 2)
        assert val == pytest.approx(expected, rel=1e-14)

    def test_matches_term_by_term_oracle(self, rng):
        for _ in range(5):
            ds, X, y = random_dataset(rng, 15, 6)
            w = rng.standard_normal(6)
            anchor = rng.standard_normal(6)
            corr = rng.standard_normal(6) * 0.1
            alpha = float(rng.random())
            reg = Regularization(0.15, 0.02)
            oracle = (
                naive_objective(X, y, w, reg.lambda1, reg.lambda2)
                + corr @ w
                + 0.5 * alpha * np.sum((w - anchor) ** 2)
            )
            assert csl_objective(ds, w, anchor, corr, alpha, reg) == pytest.approx(oracle, rel=1e-12)

    def test_correction_substitutes_global_gradient(self, rng):
        # Smooth-part gradient of the surrogate at the anchor equals the
        # global gradient, by construction of the correction term.
        full, Xf, yf = random_dataset(rng, 40, 6)
        part = full.take_rows(np.arange(20))
        anchor = rng.standard_normal(6) * 0.3
        g_global = local_gradient(full, anchor).g
        g_local = local_gradient(part, anchor).g
        corr = g_global - g_local
        reg = Regularization(0.0)
        alpha = 0.9

        def smooth_surrogate(v):
            return (
                smooth_logistic_value(Xf[:20], yf[:20], v)
                + corr @ v
                + 0.5 * alpha * np.sum((v - anchor) ** 2)
            )

        fd = central_diff_gradient(smooth_surrogate, anchor)
        assert np.max(np.abs(fd - g_global)) < 1e-5


class TestCurvature:
    def test_weights_at_zero(self, rng):
        ds, _, _ = random_dataset(rng, 15, 4)
        state = curvature_at(ds, np.zeros(4), 0.0, Regularization(0.0))
        assert np.allclose(state.d_weights, 0.25, atol=1e-15)

    def test_diagonal_matches_dense_oracle(self, rng):
        X = rng.standard_normal((5, 4))
        y = (rng.random(5) < 0.5).astype(float)
        ds = LabeledDataset(SparseDesignMatrix.from_dense(X), y)
        w = rng.standard_normal(4)
        state = curvature_at(ds, w, 0.0, Regularization(0.0))
        probs = 1.0 / (1.0 + np.exp(-(X @ w)))
        H = (X.T * (probs * (1 - probs))) @ X / 5
        assert np.allclose(state.hess_diag, np.diag(H), atol=1e-12)

    def test_damping_is_additive(self, rng):
        ds, _, _ = random_dataset(rng, 12, 5)
        w = rng.standard_normal(5)
        reg = Regularization(0.1, 0.2)
        base = curvature_at(ds, w, 0.0, reg).hess_diag
        bumped = curvature_at(ds, w, 1.5, reg).hess_diag
        assert np.allclose(bumped - base, 1.5, atol=1e-14)

    def test_margins_and_xdelta_shapes(self, rng):
        ds, X, _ = random_dataset(rng, 12, 5)
        w = rng.standard_normal(5)
        state = curvature_at(ds, w, 0.0, Regularization(0.0))
        assert np.allclose(state.margins, X @ w, atol=1e-12)
        assert np.all(state.xdelta == 0.0) and state.xdelta.shape == (12,)
        assert np.all(state.d_weights > 0) and np.all(state.d_weights <= 0.25)


class TestConvexityAndNnz:
    def test_objective_convex_along_lines(self, rng):
        ds, _, _ = random_dataset(rng, 20, 6)
        reg = Regularization(0.2, 0.01)
        for _ in range(20):
            w1 = rng.standard_normal(6)
            w2 = rng.standard_normal(6)
            theta = float(rng.random())
            mix = local_objective(ds, theta * w1 + (1 - theta) * w2, reg)
            bound = theta * local_objective(ds, w1, reg) + (1 - theta) * local_objective(ds, w2, reg)
            assert mix <= bound + 1e-12

    def test_nnz_counts_exact_zeros(self):
        assert nnz(np.array([0.0, 1e-300, -2.0, 0.0])) == 2
