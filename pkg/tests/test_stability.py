import math

import numpy as np
import pytest

from robmean.stability import (check_stability_exact, check_stability_heuristic,
                               direction_grid, is_stream_stable)


class TestExactMode:
    def test_worked_example(self):
        S = np.array([[-1.0], [-1.0], [1.0], [1.0]])
        rep = check_stability_exact(S, np.zeros(1), 0.25)
        assert rep.delta_required == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert rep.cond2_max == pytest.approx(0.0, abs=1e-15)

    def test_all_zeros(self):
        S = np.zeros((6, 1))
        rep = check_stability_exact(S, np.zeros(1), 0.25)
        # condition 1 gives 0; condition 2 gives |0 - 1| = 1 => delta = sqrt(eps)
        assert rep.delta_required == pytest.approx(0.5)

    def test_tiny_epsilon_full_set_only(self):
        rng = np.random.default_rng(0)
        S = rng.standard_normal((8, 1))
        mu = S.mean(axis=0)
        rep = check_stability_exact(S, mu, 0.01)  # floor = 8: only S' = S
        proj = (S - mu)[:, 0]
        expect = max(abs(proj.mean()),
                     math.sqrt(0.01 * abs((proj ** 2).mean() - 1)))
        assert rep.delta_required == pytest.approx(expect, abs=1e-12)

    def test_monotone_in_subset_floor(self):
        rng = np.random.default_rng(1)
        S = rng.standard_normal((10, 1))
        deltas = [check_stability_exact(S, np.zeros(1), eps).delta_required
                  for eps in (0.05, 0.15, 0.25, 0.35)]
        # larger eps allows smaller subsets: delta_required grows
        assert all(a <= b + 1e-12 for a, b in zip(deltas, deltas[1:]))

    def test_restriction_property(self):
        # coordinate-prefix truncation never needs a larger delta (up to
        # the direction-grid resolution)
        rng = np.random.default_rng(2)
        for _ in range(5):
            S = rng.standard_normal((9, 3))
            mu = np.zeros(3)
            full = check_stability_exact(S, mu, 0.2, grid_points=2000)
            for D in (1, 2):
                pref = check_stability_exact(S[:, :D], mu[:D], 0.2,
                                             grid_points=2000)
                assert pref.delta_required <= full.delta_required + 1e-3

    def test_size_limits(self):
        with pytest.raises(ValueError):
            check_stability_exact(np.zeros((19, 1)), np.zeros(1), 0.1)
        with pytest.raises(ValueError):
            check_stability_exact(np.zeros((5, 4)), np.zeros(4), 0.1)


class TestHeuristicMode:
    def test_gaussian_scaling(self):
        rng = np.random.default_rng(3)
        eps = 0.05
        X = rng.standard_normal((int(1e4 / eps), 5))
        rep = check_stability_heuristic(X, np.zeros(5), eps)
        assert rep.delta_required <= 3 * math.sqrt(eps)

    def test_planted_outlier_witnessed(self):
        rng = np.random.default_rng(4)
        n = 400
        X = rng.standard_normal((n, 2))
        X[0] = [10.0 * math.sqrt(2), 10.0 * math.sqrt(2)]
        eps = 2.0 / n
        rep = check_stability_heuristic(X, np.zeros(2), eps)
        assert rep.refutes(math.sqrt(eps) / 10)

    def test_agreement_with_exact(self):
        # heuristic violation bound never exceeds the exact requirement
        rng = np.random.default_rng(5)
        for trial in range(40):
            n = int(rng.integers(6, 15))
            D = int(rng.integers(1, 3))
            S = rng.standard_normal((n, D)) * rng.uniform(0.5, 2.0)
            eps = float(rng.uniform(0.05, 0.35))
            exact = check_stability_exact(S, np.zeros(D), eps)
            heur = check_stability_heuristic(S, np.zeros(D), eps,
                                             seed=trial)
            assert heur.violation_lower <= exact.delta_required + 1e-12

    def test_witness_is_reproducible(self):
        rng = np.random.default_rng(6)
        S = rng.standard_normal((100, 3))
        a = check_stability_heuristic(S, np.zeros(3), 0.1, seed=9)
        b = check_stability_heuristic(S, np.zeros(3), 0.1, seed=9)
        assert a.delta_required == b.delta_required
        np.testing.assert_array_equal(a.witness[0], b.witness[0])


class TestDirectionGrid:
    def test_d1_exact(self):
        np.testing.assert_array_equal(direction_grid(1), [[1.0]])

    def test_unit_norm(self):
        for D in (2, 3):
            g = direction_grid(D, 500)
            np.testing.assert_allclose(np.linalg.norm(g, axis=1), 1.0,
                                       atol=1e-12)


class TestStreamGate:
    def test_gaussian_clean_passes_at_calibrated_delta(self):
        rng = np.random.default_rng(7)
        eps = 0.1
        clean = rng.standard_normal((20_000, 8))
        delta_gate = 2 * eps * math.sqrt(math.log(1 / eps))
        assert is_stream_stable(clean, np.zeros(8), eps, delta_gate)

    def test_gross_contamination_fails_gate(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((1000, 2))
        x[:100] += 40.0
        assert not is_stream_stable(x, np.zeros(2), 0.1, 0.3)
