import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robmean.core import (EstimateTrace, OnlineDisciplineError, OnlineEstimator,
                          SampleMeanEstimator, ZeroEstimator, l2_error,
                          make_stream, replay)
from robmean.threat import (GaussianProduct, IdentityAdversary,
                            MeanShiftAdversary, StaircaseAdversary)


def gaussian_stream(n=200, T=4, d=1, eps=0.1, adversary=None, seed=0):
    gen = GaussianProduct(T=T, d=d)
    clean = gen.sample(n, np.random.default_rng(seed))
    return make_stream(clean, gen.true_mean, adversary, eps, T, d, seed=seed + 1), gen


class TestMakeStream:
    def test_identity_adversary_zero_corruption(self):
        stream, gen = gaussian_stream(adversary=IdentityAdversary())
        assert not stream.corrupted_mask.any()
        # data equals clean up to the permutation
        clean = gen.sample(200, np.random.default_rng(0))
        assert np.sort(stream.data, axis=0) == pytest.approx(np.sort(clean, axis=0))

    def test_mean_shift_floor_budget(self):
        gen = GaussianProduct(T=2, d=1)
        clean = gen.sample(100, np.random.default_rng(1))
        adv = MeanShiftAdversary(gen, magnitude=3.0)
        stream = make_stream(clean, gen.true_mean, adv, 0.1, 2, 1, seed=2)
        assert int(stream.corrupted_mask.sum()) == 10

    def test_staircase_block_counts(self):
        gen = GaussianProduct(T=4, d=1)
        clean = gen.sample(1000, np.random.default_rng(3))
        stream = make_stream(clean, gen.true_mean, StaircaseAdversary(), 0.1,
                             4, 1, seed=4)
        # self-consistent block size: b = floor(eps*|C|/(T(1-eps))) with
        # |C| = n - 4b  =>  b = 25
        labels = stream.labels[stream.labels >= 0]
        assert labels.size == 100
        for i in range(1, 5):
            assert (labels == i).sum() == 25

    def test_rejects_large_epsilon(self):
        gen = GaussianProduct(T=2, d=1)
        clean = gen.sample(10, np.random.default_rng(0))
        with pytest.raises(ValueError):
            make_stream(clean, gen.true_mean, None, 0.5, 2, 1, seed=0)

    def test_rejects_wrong_shape_replacements(self):
        class BadAdversary:
            def corrupt(self, clean, epsilon, true_mean, rng):
                from robmean.core import Replacements
                return Replacements(indices=np.array([0]),
                                    rows=np.zeros((1, clean.shape[1] + 1)))

        gen = GaussianProduct(T=2, d=1)
        clean = gen.sample(10, np.random.default_rng(0))
        with pytest.raises(ValueError):
            make_stream(clean, gen.true_mean, BadAdversary(), 0.2, 2, 1, seed=0)

    def test_uneven_block_split_rejected(self):
        gen = GaussianProduct(T=3, d=1)
        clean = gen.sample(10, np.random.default_rng(0))
        with pytest.raises(ValueError):
            make_stream(clean, gen.true_mean, None, 0.1, 2, 2, seed=0)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=100, deadline=None)
    def test_corruption_budget_safe(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 60))
        T = int(rng.integers(1, 5))
        eps = float(rng.uniform(0.01, 0.49))
        gen = GaussianProduct(T=T, d=1)
        clean = gen.sample(n, rng)
        adv = MeanShiftAdversary(gen, magnitude=float(rng.uniform(0, 5)))
        stream = make_stream(clean, gen.true_mean, adv, eps, T, 1, seed=seed)
        assert stream.corrupted_mask.sum() <= int(np.floor(eps * n))


class TestReplay:
    def test_single_round_sample_mean(self):
        stream, _ = gaussian_stream(n=50, T=1)
        trace = replay(stream, SampleMeanEstimator())
        np.testing.assert_allclose(trace.estimates[0], stream.data.mean(axis=0))

    def test_zero_estimator_error_is_mean_norm(self):
        gen = GaussianProduct(T=3, d=2, mean=np.arange(6.0))
        clean = gen.sample(30, np.random.default_rng(5))
        stream = make_stream(clean, gen.true_mean, None, 0.1, 3, 2, seed=6)
        trace = replay(stream, ZeroEstimator())
        assert l2_error(trace, gen.true_mean) == pytest.approx(
            np.linalg.norm(gen.true_mean))

    def test_determinism(self):
        stream, _ = gaussian_stream(n=100, T=3)
        t1 = replay(stream, SampleMeanEstimator())
        t2 = replay(stream, SampleMeanEstimator())
        assert np.array_equal(t1.estimates, t2.estimates)

    def test_estimator_must_be_fresh(self):
        stream, _ = gaussian_stream(n=20, T=2)
        est = SampleMeanEstimator()
        replay(stream, est)
        with pytest.raises(RuntimeError):
            replay(stream, est)

    def test_block_boundaries(self):
        stream, _ = gaussian_stream(n=10, T=3, d=2)
        np.testing.assert_array_equal(stream.block(2), stream.data[:, 2:4])
        with pytest.raises(IndexError):
            stream.block(4)


class ProbeEstimator(OnlineEstimator):
    """Malicious estimator peeking at a future block."""

    def __init__(self, peek_ahead=1):
        super().__init__()
        self.peek_ahead = peek_ahead

    def observe_block(self, t, block):
        self._cursor.block(t + self.peek_ahead)

    def emit_estimate(self, t):
        return np.zeros(self._cursor.d)


class TestOnlineDiscipline:
    @pytest.mark.parametrize("ahead", [1, 2])
    def test_future_read_aborts(self, ahead):
        stream, _ = gaussian_stream(n=20, T=4)
        with pytest.raises(OnlineDisciplineError):
            replay(stream, ProbeEstimator(ahead))

    def test_past_reads_allowed(self):
        class PastReader(OnlineEstimator):
            def observe_block(self, t, block):
                for s in range(1, t + 1):
                    self._cursor.block(s)
                self._last = block.mean(axis=0)

            def emit_estimate(self, t):
                return self._last

        stream, _ = gaussian_stream(n=20, T=4)
        trace = replay(stream, PastReader())
        assert trace.estimates.shape == (4, 1)


class TestL2Error:
    def test_exact_match_is_zero(self):
        trace = EstimateTrace(estimates=np.array([[1.0], [2.0]]))
        assert l2_error(trace, np.array([1.0, 2.0])) == 0.0

    def test_unit_offset(self):
        trace = EstimateTrace(estimates=np.array([[1.0], [0.0]]))
        assert l2_error(trace, np.zeros(2)) == pytest.approx(1.0)

    def test_constant_offset_four_rounds(self):
        trace = EstimateTrace(estimates=np.full((4, 1), 0.3))
        assert l2_error(trace, np.zeros(4)) == pytest.approx(0.6)

    def test_shape_mismatch(self):
        trace = EstimateTrace(estimates=np.zeros((2, 1)))
        with pytest.raises(ValueError):
            l2_error(trace, np.zeros(3))
