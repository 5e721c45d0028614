import math

import numpy as np
import pytest
from scipy import stats

from oracles import w1_by_cdf_integration
from uqbench import metrics as mt


def batch(prob2, labels, lrfd2=None):
    prob2 = np.asarray(prob2, dtype=float)
    if lrfd2 is None:
        lrfd2 = prob2
    return mt.EvaluationBatch(prob2, np.asarray(labels), np.asarray(lrfd2, dtype=float))


class TestAccuracyAndZ:
    def test_all_correct(self):
        assert mt.accuracy(batch([0.9, 0.1], [2, 1])) == 1.0

    def test_threshold_ties_to_class_1(self):
        assert mt.accuracy(batch([0.5], [1])) == 1.0
        assert mt.accuracy(batch([0.5], [2])) == 0.0

    def test_z_all_confident_correct(self):
        assert mt.z_score(batch([1.0, 1.0], [2, 2])) == 0.0

    def test_z_all_confident_half_correct(self):
        assert mt.z_score(batch([1.0, 1.0], [2, 1])) == pytest.approx(0.5)

    def test_z_calibrated_in_aggregate(self):
        prob = np.full(10, 0.8)
        labels = np.array([2] * 8 + [1] * 2)
        assert mt.z_score(batch(prob, labels)) == pytest.approx(0.0, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            batch([], [])


class TestECE:
    def test_perfectly_confident_correct(self):
        assert mt.ece(batch([1.0] * 5, [2] * 5)) == 0.0

    def test_calibrated_single_confidence(self):
        prob = np.full(10, 0.7)
        labels = np.array([2] * 7 + [1] * 3)
        assert mt.ece(batch(prob, labels)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_constructed_two_bins(self):
        # 100 points at confidence 0.6 / 50% correct, 100 at 0.9 / 90% correct:
        # 0.5 * |0.5 - 0.6| + 0.5 * 0 = 0.05.
        prob = np.concatenate([np.full(100, 0.6), np.full(100, 0.9)])
        labels = np.concatenate([
            np.array([2] * 50 + [1] * 50),
            np.array([2] * 90 + [1] * 10),
        ])
        assert mt.ece(batch(prob, labels), bins=2) == pytest.approx(0.05, abs=1e-12)

    def test_bounded_by_one(self, rng):
        b = batch(rng.random(500), rng.integers(1, 3, 500))
        assert 0.0 <= mt.ece(b) <= 1.0


class TestLogLoss:
    def test_perfect_predictions(self):
        assert mt.log_loss(batch([1.0, 0.0], [2, 1])) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_predictions(self):
        assert mt.log_loss(batch([0.5] * 4, [1, 2, 1, 2])) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_clipping_avoids_infinity(self):
        val = mt.log_loss(batch([1.0], [1]))
        assert math.isfinite(val)
        assert val == pytest.approx(-math.log(mt.PROB_CLIP), rel=1e-6)

    @pytest.mark.slow
    def test_decomposition_against_kl_plus_entropy(self, rng):
        # For labels sampled from nu: E[log loss] = mean KL + mean entropy(nu).
        n = 200_000
        nu = rng.uniform(0.05, 0.95, n)
        p = np.clip(nu + rng.normal(0.0, 0.08, n), 0.02, 0.98)
        labels = np.where(rng.random(n) < nu, 2, 1)
        b = mt.EvaluationBatch(p, labels, nu)
        entropy = -(nu * np.log(nu) + (1 - nu) * np.log(1 - nu)).mean()
        lhs = mt.log_loss(b)
        rhs = mt.mean_kl(b) + entropy
        assert lhs == pytest.approx(rhs, abs=5e-3)

    @pytest.mark.slow
    def test_gibbs_inequality(self, rng):
        n = 100_000
        nu = rng.uniform(0.1, 0.9, n)
        p = np.clip(nu + rng.normal(0.0, 0.15, n), 0.01, 0.99)
        labels = np.where(rng.random(n) < nu, 2, 1)
        entropy = -(nu * np.log(nu) + (1 - nu) * np.log(1 - nu)).mean()
        assert mt.log_loss(mt.EvaluationBatch(p, labels, nu)) > entropy - 5e-3


class TestWasserstein:
    def test_zero_when_identical(self, rng):
        p = rng.random(100)
        assert mt.wasserstein1(batch(p, rng.integers(1, 3, 100), p)) == 0.0

    def test_translation(self, rng):
        nu = rng.uniform(0.2, 0.7, 200)
        p = nu + 0.1
        b = mt.EvaluationBatch(p, rng.integers(1, 3, 200), nu)
        assert mt.wasserstein1(b) == pytest.approx(0.1, abs=1e-12)

    def test_against_cdf_integration_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 200))
            p = rng.random(n)
            nu = rng.random(n)
            b = mt.EvaluationBatch(p, rng.integers(1, 3, n), nu)
            assert mt.wasserstein1(b) == pytest.approx(w1_by_cdf_integration(p, nu), abs=1e-10)
            assert mt.wasserstein1(b) == pytest.approx(stats.wasserstein_distance(p, nu), abs=1e-10)

    def test_permutation_invariance(self, rng):
        p = rng.random(64)
        nu = rng.random(64)
        labels = rng.integers(1, 3, 64)
        b1 = mt.EvaluationBatch(p, labels, nu)
        perm = rng.permutation(64)
        b2 = mt.EvaluationBatch(p[perm], labels[perm], nu[perm])
        for metric in (mt.accuracy, mt.z_score, mt.ece, mt.log_loss, mt.wasserstein1, mt.mean_kl):
            assert metric(b1) == pytest.approx(metric(b2), abs=1e-12)


class TestMeanKL:
    def test_zero_at_match(self, rng):
        nu = rng.uniform(0.05, 0.95, 50)
        assert mt.mean_kl(mt.EvaluationBatch(nu, rng.integers(1, 3, 50), nu)) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_example(self):
        b = mt.EvaluationBatch(np.array([0.25]), np.array([1]), np.array([0.5]))
        assert mt.mean_kl(b) == pytest.approx(0.14384103622589042, abs=1e-12)

    def test_extreme_lrfd_no_nan(self):
        b = mt.EvaluationBatch(np.array([0.3, 0.8]), np.array([1, 2]), np.array([0.0, 1.0]))
        val = mt.mean_kl(b)
        assert math.isfinite(val)
        expected = 0.5 * (-math.log(1 - 0.3)) + 0.5 * (-math.log(0.8))
        assert val == pytest.approx(expected, abs=1e-12)

    def test_matches_scalar_loop(self, rng):
        n = 50
        nu = rng.random(n)
        p = rng.uniform(0.01, 0.99, n)
        b = mt.EvaluationBatch(p, rng.integers(1, 3, n), nu)
        total = 0.0
        for v, q in zip(nu, p):
            if v > 0:
                total += v * math.log(v / q)
            if v < 1:
                total += (1 - v) * math.log((1 - v) / (1 - q))
        assert mt.mean_kl(b) == pytest.approx(total / n, abs=1e-12)

    def test_nonnegative(self, rng):
        nu = rng.random(300)
        p = rng.uniform(0.001, 0.999, 300)
        assert mt.mean_kl(mt.EvaluationBatch(p, rng.integers(1, 3, 300), nu)) >= 0.0
