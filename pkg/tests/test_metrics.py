import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bnn_severity.metrics import mse, paired_sq_error_test, smse
from bnn_severity.predictive import PredictiveDistribution


def enumeration_p_value(d):
    """Two-sided exact p-value by listing all 2**n sign patterns of the ranks."""
    d = np.asarray(d, dtype=float)
    d = d[d != 0]
    n = d.shape[0]
    ranks = stats.rankdata(np.abs(d))
    observed = ranks[d > 0].sum()
    sums = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=n)]
    sums = np.array(sums)
    lower = int(np.sum(sums <= observed + 1e-9))
    upper = int(np.sum(sums >= observed - 1e-9))
    return min(1.0, 2 * min(lower, upper) / 2**n)


def dist(mean, variance):
    mean = np.asarray(mean, dtype=float)
    return PredictiveDistribution(mean, np.asarray(variance, dtype=float), mean[None, :], 0.0)


class TestMse:
    def test_perfect(self):
        assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand_sum(self):
        assert mse([1.0, -1.0, 2.0], [0.0, 0.0, 0.0]) == 2.0

    def test_table_hmc_aggregate(self):
        folds = [12.42, 14.95, 11.49, 14.36, 7.65]
        assert f"{np.mean(folds):.2f}" == "12.17"

    @pytest.mark.parametrize("a,b", [([1.0], [1.0, 2.0]), ([], [])])
    def test_errors(self, a, b):
        with pytest.raises(ValueError):
            mse(a, b)


class TestSmse:
    def test_perfect_means(self):
        assert smse([1.0, 2.0], dist([1.0, 2.0], [0.5, 3.0])) == 0.0

    def test_single_point(self):
        assert smse([2.0], dist([0.0], [4.0])) == 1.0

    def test_unit_variance_equals_mse(self, rng):
        y, m = rng.normal(size=30), rng.normal(size=30)
        assert smse(y, dist(m, np.ones(30))) == mse(y, m)

    def test_trivial_predictor_calibration(self, rng):
        train = rng.normal(22.0, 3.7, size=5000)
        test = rng.normal(22.0, 3.7, size=20000)
        pred = dist(np.full(20000, train.mean()), np.full(20000, train.var()))
        assert abs(smse(test, pred) - 1.0) < 0.1

    def test_rejects_non_positive_variance(self):
        with pytest.raises(ValueError):
            smse([1.0, 2.0], dist([1.0, 2.0], [1.0, 0.0]))

    def test_rejects_point_predictions(self):
        with pytest.raises(TypeError):
            smse([1.0], np.array([1.0]))


class TestSignedRankTest:
    def test_identical_vectors(self, rng):
        a = rng.normal(size=12) ** 2
        assert paired_sq_error_test(a, a) == (0.0, 1.0)

    def test_dominated_pair(self, rng):
        a = rng.uniform(size=10)
        _, p = paired_sq_error_test(a, a + 1.0)
        assert p == 2 / 1024
        assert p == pytest.approx(0.00195, abs=1e-5)

    def test_pairing_invariance(self, rng):
        a, b = rng.exponential(size=20), rng.exponential(size=20)
        perm = rng.permutation(20)
        assert paired_sq_error_test(a, b) == paired_sq_error_test(a[perm], b[perm])

    @pytest.mark.parametrize("n", range(6, 11))
    def test_every_sign_pattern_exact(self, n):
        magnitudes = np.arange(1, n + 1, dtype=float)
        worst = 0.0
        for signs in itertools.product((-1.0, 1.0), repeat=n):
            d = magnitudes * np.array(signs)
            _, p = paired_sq_error_test(d, np.zeros(n))
            worst = max(worst, abs(p - enumeration_p_value(d)))
        assert worst == 0.0

    def test_ties_and_zeros_exact(self):
        d = np.array([1.0, -1.0, 2.0, 2.0, -2.0, 0.0, 3.0, 0.0, 5.0])
        _, p = paired_sq_error_test(d, np.zeros_like(d))
        assert p == enumeration_p_value(d)

    def test_matches_scipy_exact(self, rng):
        a, b = rng.exponential(size=18), rng.exponential(size=18)
        stat, p = paired_sq_error_test(a, b)
        ref = stats.wilcoxon(a, b, method="exact")
        assert stat == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-12)

    def test_normal_approximation_matches_scipy(self, rng):
        a, b = rng.exponential(size=80), rng.exponential(size=80) + 0.2
        a[:6] = b[:6] + np.repeat([0.5, -0.5, 1.0], 2)
        stat, p = paired_sq_error_test(a, b)
        ref = stats.wilcoxon(a, b, method="approx", correction=False)
        assert stat == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-10)

    def test_minimum_length(self):
        with pytest.raises(ValueError):
            paired_sq_error_test([1.0] * 5, [0.0] * 5)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-4, 4), min_size=6, max_size=12))
    def test_p_value_in_unit_interval_and_symmetric(self, diffs):
        d = np.array(diffs, dtype=float)
        s1, p1 = paired_sq_error_test(d, np.zeros_like(d))
        s2, p2 = paired_sq_error_test(np.zeros_like(d), d)
        assert 0.0 < p1 <= 1.0
        assert (s1, p1) == (s2, p2)
