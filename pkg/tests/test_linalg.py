import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robmean.linalg import (WeightedMoments, top_eigenpair, weighted_cov,
                            weighted_mean, weighted_median)


def jacobi_eigh(S, sweeps=100, tol=1e-14):
    """Exhaustive Jacobi-rotation eigensolver (independent oracle)."""
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < tol:
                    continue
                theta = 0.5 * np.arctan2(2 * A[p, q], A[q, q] - A[p, p])
                c, s = np.cos(theta), np.sin(theta)
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    return np.diag(A), V


class TestWeightedMean:
    def test_uniform_two_points(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(weighted_mean([1, 1], X), [0.5, 0.5])

    def test_degenerate_weight_picks_row(self):
        X = np.arange(12.0).reshape(4, 3)
        w = np.array([1.0, 0, 0, 0])
        np.testing.assert_allclose(weighted_mean(w, X), X[0])

    def test_direct_arithmetic(self):
        assert weighted_mean([2 / 3, 1 / 3], np.array([[0.0], [3.0]]))[0] == pytest.approx(1.0)

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            weighted_mean([0.0, 0.0], np.zeros((2, 1)))


class TestWeightedCov:
    def test_single_point_zero_matrix(self):
        m = weighted_cov([1.0], np.array([[3.0, -1.0]]))
        np.testing.assert_allclose(m.cov, np.zeros((2, 2)), atol=1e-15)

    def test_pm_one_unit_variance(self):
        m = weighted_cov([1.0, 1.0], np.array([[1.0], [-1.0]]))
        assert m.cov[0, 0] == pytest.approx(1.0)

    def test_gaussian_monte_carlo_isotropic(self):
        rng = np.random.default_rng(42)
        X = rng.standard_normal((10_000, 3))
        m = weighted_cov(np.ones(10_000), X)
        # 3/sqrt(n) scaling, verified by oracle runs at this seed
        assert np.linalg.norm(m.cov - np.eye(3), 2) <= 0.15

    def test_psd_probe(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((50, 4))
        w = rng.random(50)
        m = weighted_cov(w, X)
        np.testing.assert_allclose(m.cov, m.cov.T, atol=1e-12)
        for _ in range(100):
            v = rng.standard_normal(4)
            v /= np.linalg.norm(v)
            assert v @ m.cov @ v >= -1e-9

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((12, 3))
        w = rng.random(12)
        perm = rng.permutation(12)
        a = weighted_cov(w, X)
        b = weighted_cov(w[perm], X[perm])
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-12)


class TestTopEigenpair:
    def test_diagonal(self):
        val, vec = top_eigenpair(np.diag([2.0, 1.0]))[:2]
        assert val == pytest.approx(2.0, abs=1e-9)
        assert abs(vec[0]) == pytest.approx(1.0, abs=1e-6)

    def test_identity_value_only(self):
        val = top_eigenpair(np.eye(4)).value
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_planted_spike(self):
        rng = np.random.default_rng(3)
        u = rng.standard_normal(5)
        u /= np.linalg.norm(u)
        S = np.eye(5) + 3.0 * np.outer(u, u)
        val, vec = top_eigenpair(S)[:2]
        assert val == pytest.approx(4.0, abs=1e-8)
        assert min(np.linalg.norm(vec - u), np.linalg.norm(vec + u)) < 1e-6
        # cross-check against the Jacobi oracle
        evals, _ = jacobi_eigh(S)
        assert val == pytest.approx(evals.max(), abs=1e-8)

    def test_negative_dominant(self):
        S = np.diag([-5.0, 2.0])
        val, vec = top_eigenpair(S)[:2]
        assert val == pytest.approx(-5.0, abs=1e-8)
        assert abs(vec[0]) == pytest.approx(1.0, abs=1e-6)

    def test_rejects_nonsymmetric(self):
        with pytest.raises(ValueError):
            top_eigenpair(np.array([[0.0, 1.0], [0.0, 0.0]]))

    @given(st.integers(0, 2 ** 31 - 1), st.integers(2, 20))
    @settings(max_examples=40, deadline=None)
    def test_residual_vs_jacobi(self, seed, d):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((d, d))
        S = 0.5 * (A + A.T)
        res = top_eigenpair(S)
        assert np.linalg.norm(S @ res.vector - res.value * res.vector) \
            <= 1e-6 * (1.0 + abs(res.value))
        evals, _ = jacobi_eigh(S)
        oracle = evals[np.argmax(np.abs(evals))]
        assert res.value == pytest.approx(oracle, abs=1e-6 * (1 + abs(oracle)))


class TestWeightedMedian:
    def test_cdf_convention(self):
        assert weighted_median([1, 2, 3], [0.5, 0.25, 0.25]) == 1.0

    def test_single_value(self):
        assert weighted_median([7.0], [0.3]) == 7.0

    def test_mass_on_upper(self):
        assert weighted_median([0, 10], [1, 3]) == 10.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            weighted_median([], [])

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_within_range_and_scale_invariant(self, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(1, 30)
        vals = rng.standard_normal(n)
        w = rng.random(n) + 1e-3
        med = weighted_median(vals, w)
        assert vals.min() <= med <= vals.max()
        assert weighted_median(vals, 7.3 * w) == med
