import math

import numpy as np
import pytest

from uqbench import neuralnet as nn


def finite_difference_check(mlp_cfg, loss, x, onehot, seed, epoch=0, masks=None, h=1e-6):
    """Max relative error between backprop and central finite differences."""
    net = nn.init_weights(mlp_cfg, np.random.default_rng(seed))

    def loss_value():
        logits, _ = nn._forward_cached(net, x, masks)
        return loss.value(logits, onehot, epoch)

    logits, cache = nn._forward_cached(net, x, masks)
    grads = nn._backprop(net, cache, loss.grad_logits(logits, onehot, epoch))
    worst = 0.0
    for param, grad in zip(net.params(), grads):
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss_value()
            flat[idx] = orig - h
            down = loss_value()
            flat[idx] = orig
            fd = (up - down) / (2.0 * h)
            scale = max(abs(fd), abs(gflat[idx]), 1e-6)
            worst = max(worst, abs(gflat[idx] - fd) / scale)
    return worst


def random_case(rng, with_dropout=False):
    """A random small configuration at a numerically safe evaluation point.

    Central differences are meaningless across ReLU kinks or inside the
    log-probability clip, so candidate cases are resampled until every
    pre-activation is clear of zero and no probability is near saturation.
    """
    while True:
        layers = int(rng.integers(1, 3))
        width = int(rng.integers(3, 8))
        p = float(rng.uniform(0.1, 0.5)) if with_dropout else 0.0
        cfg = nn.MLPConfig(layers, width, dropout_rate=p)
        n = int(rng.integers(2, 9))
        x = rng.normal(size=(n, 2))
        onehot = np.zeros((n, 2))
        onehot[np.arange(n), rng.integers(0, 2, n)] = 1.0
        masks = nn.make_dropout_masks(cfg, n, rng) if with_dropout else None
        seed = int(rng.integers(1 << 30))
        net = nn.init_weights(cfg, np.random.default_rng(seed))
        logits, (_, preacts, _) = nn._forward_cached(net, x, masks)
        probs = nn.softmax(logits)
        if probs.min() > 1e-6 and all(np.abs(z).min() > 1e-4 for z in preacts):
            return cfg, x, onehot, masks, seed


class TestForward:
    def test_zero_weights_give_uniform(self):
        cfg = nn.MLPConfig(2, 8)
        net = nn.init_weights(cfg, np.random.default_rng(0))
        for w in net.weights:
            w[:] = 0.0
        _, probs = nn.forward(net, np.array([[3.0, -1.0], [0.0, 0.0]]))
        assert np.allclose(probs, 0.5, atol=1e-15)

    def test_softmax_shift_invariance(self):
        z = np.array([[4.2, 4.2], [-7.0, -7.0]])
        assert np.allclose(nn.softmax(z), 0.5, atol=1e-15)

    def test_probabilities_sum_to_one(self, rng):
        cfg = nn.MLPConfig(3, 16)
        net = nn.init_weights(cfg, rng)
        _, probs = nn.forward(net, rng.normal(size=(40, 2)) * 5)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_dropout_mask_scaling(self, rng):
        cfg = nn.MLPConfig(1, 1000, dropout_rate=0.4)
        masks = nn.make_dropout_masks(cfg, 1, rng)
        vals = np.unique(masks[0])
        assert set(np.round(vals, 12)) <= {0.0, round(1 / 0.6, 12)}

    def test_non_finite_activation_raises(self):
        cfg = nn.MLPConfig(1, 4)
        net = nn.init_weights(cfg, np.random.default_rng(0))
        net.weights[0][0, 0] = np.inf
        with pytest.raises(nn.TrainingDiverged):
            nn.forward(net, np.array([[1.0, 1.0]]))


class TestCrossEntropy:
    def test_perfect_one_hot(self):
        onehot = np.eye(2)[[0, 1, 1]]
        assert nn.cross_entropy(onehot, onehot) <= 1e-7 * 3

    def test_uniform_sum_convention(self):
        n = 11
        onehot = np.eye(2)[np.zeros(n, dtype=int)]
        probs = np.full((n, 2), 0.5)
        assert nn.cross_entropy(onehot, probs) == pytest.approx(n * math.log(2.0), abs=1e-12)

    def test_matches_scalar_reimplementation(self, rng):
        for _ in range(5):
            n = int(rng.integers(1, 30))
            probs = rng.dirichlet((1.0, 1.0), size=n)
            onehot = np.eye(2)[rng.integers(0, 2, n)]
            expected = 0.0
            for c, q in zip(onehot, probs):
                for j in range(2):
                    expected -= c[j] * math.log(max(q[j], 1e-9))
            assert nn.cross_entropy(onehot, probs) == pytest.approx(expected, abs=1e-10)


class TestGradients:
    def test_cross_entropy_gradcheck(self, rng):
        for _ in range(4):
            cfg, x, onehot, _, seed = random_case(rng)
            err = finite_difference_check(cfg, nn.CrossEntropyLoss(), x, onehot, seed=seed)
            assert err < 1e-4

    def test_conflictual_gradcheck(self, rng):
        for beta in (0.1, 0.5):
            cfg, x, onehot, _, seed = random_case(rng)
            err = finite_difference_check(cfg, nn.ConflictualLoss(2, beta), x, onehot, seed=seed)
            assert err < 1e-4

    def test_evidential_gradcheck(self, rng):
        for lam0 in (0.0, 0.002, 0.02):
            cfg, x, onehot, _, seed = random_case(rng)
            err = finite_difference_check(cfg, nn.EvidentialLoss(lam0), x, onehot,
                                          seed=seed, epoch=150)
            assert err < 1e-4

    def test_gradcheck_through_dropout_mask(self, rng):
        cfg, x, onehot, masks, seed = random_case(rng, with_dropout=True)
        err = finite_difference_check(cfg, nn.CrossEntropyLoss(), x, onehot,
                                      seed=seed, masks=masks)
        assert err < 1e-4


class TestLossValues:
    def test_conflictual_reduces_to_ce_at_zero_beta(self, rng):
        cfg, x, onehot, _, _ = random_case(rng)
        net = nn.init_weights(cfg, rng)
        logits, _ = nn._forward_cached(net, x)
        ce = nn.CrossEntropyLoss()
        cl = nn.ConflictualLoss(1, 0.0)
        assert cl.value(logits, onehot) == ce.value(logits, onehot)
        assert np.array_equal(cl.grad_logits(logits, onehot), ce.grad_logits(logits, onehot))

    def test_conflictual_matches_scalar(self, rng):
        beta = 0.1
        cl = nn.ConflictualLoss(2, beta)
        n = 9
        logits = rng.normal(size=(n, 2)) * 2
        onehot = np.eye(2)[rng.integers(0, 2, n)]
        probs = nn.softmax(logits)
        expected = 0.0
        for c, q in zip(onehot, probs):
            for j in range(2):
                expected -= c[j] * math.log(max(q[j], 1e-9))
            expected -= beta * math.log(max(q[1], 1e-9))
        assert cl.value(logits, onehot) == pytest.approx(expected, abs=1e-10)

    def test_evidential_kl_is_zero_at_uniform(self):
        assert nn.EvidentialLoss._kl_to_uniform(np.array([[1.0, 1.0]]))[0] == pytest.approx(0.0, abs=1e-14)

    def test_evidential_kl_matches_quadrature(self):
        # KL(Dir(2,1) || Dir(1,1)) evaluated by integrating 2v log(2v) dv.
        val = nn.EvidentialLoss._kl_to_uniform(np.array([[2.0, 1.0]]))[0]
        assert val == pytest.approx(0.19314718055994534, abs=1e-6)

    def test_evidential_lambda_zero_is_pure_risk(self, rng):
        loss = nn.EvidentialLoss(0.0)
        logits = rng.normal(size=(5, 2))
        onehot = np.eye(2)[rng.integers(0, 2, 5)]
        from scipy.special import psi, gammaln  # noqa: F401
        alpha = nn.softplus(logits) + 1.0
        s = alpha.sum(axis=1)
        risk = sum(
            c[j] * (psi(s[i]) - psi(alpha[i, j]))
            for i, c in enumerate(onehot) for j in range(2)
        )
        assert loss.value(logits, onehot, epoch=100) == pytest.approx(risk, abs=1e-12)

    def test_evidential_annealing_schedule(self):
        loss = nn.EvidentialLoss(0.002, anneal_epochs=200)
        assert loss.weight(0) == 0.0
        assert loss.weight(100) == pytest.approx(0.001)
        assert loss.weight(200) == pytest.approx(0.002)


class TestAdamW:
    def test_quadratic_convergence(self):
        target = np.array([1.5, -2.0, 0.25])
        theta = [np.zeros(3)]
        opt = nn.AdamW(theta, lr=0.05, weight_decay=0.0)
        for _ in range(2000):
            grads = [2.0 * (theta[0] - target)]
            opt.step(theta, grads)
        assert np.abs(theta[0] - target).max() < 1e-3

    def test_decoupled_weight_decay_shrinks(self):
        theta = [np.array([10.0])]
        opt = nn.AdamW(theta, lr=0.1, weight_decay=0.5)
        opt.step(theta, [np.zeros(1)])
        # Pure decay step: 10 - 0.1 * 0.5 * 10 (gradient term is zero).
        assert theta[0][0] == pytest.approx(9.5, abs=1e-12)


class TestTraining:
    def _blob(self, rng, n=120):
        x = np.vstack([rng.normal(-2.0, 0.5, (n // 2, 2)), rng.normal(2.0, 0.5, (n // 2, 2))])
        onehot = np.zeros((n, 2))
        onehot[: n // 2, 0] = 1.0
        onehot[n // 2:, 1] = 1.0
        return x, onehot

    def test_separable_blob_reaches_full_accuracy(self, rng):
        x, onehot = self._blob(rng)
        cfg = nn.MLPConfig(1, 16)
        tcfg = nn.TrainConfig(0.01, 0.0, 32, seed=5, max_epochs=50, patience=50)
        net, _ = nn.train(cfg, tcfg, x, onehot, x, onehot)
        _, probs = nn.forward(net, x)
        acc = ((probs[:, 1] > 0.5) == (onehot[:, 1] == 1)).mean()
        assert acc == 1.0

    def test_bit_identical_determinism(self, rng):
        x, onehot = self._blob(rng)
        cfg = nn.MLPConfig(2, 10, dropout_rate=0.2)
        tcfg = nn.TrainConfig(0.005, 0.01, 32, seed=99, max_epochs=12, patience=12)
        n1, v1 = nn.train(cfg, tcfg, x, onehot, x, onehot)
        n2, v2 = nn.train(cfg, tcfg, x, onehot, x, onehot)
        assert v1 == v2
        for a, b in zip(n1.params(), n2.params()):
            assert np.array_equal(a, b)

    def test_returned_weights_match_best_validation(self, rng):
        x, onehot = self._blob(rng)
        cfg = nn.MLPConfig(1, 8)
        tcfg = nn.TrainConfig(0.01, 0.0, 32, seed=1, max_epochs=40, patience=10)
        net, best_val = nn.train(cfg, tcfg, x, onehot, x, onehot)
        recomputed = nn.validation_cross_entropy(net, nn.CrossEntropyLoss(), x, onehot)
        assert recomputed == pytest.approx(best_val, abs=1e-12)

    def test_patience_stops_within_window(self, rng):
        # Validation labels are flipped, so validation loss only degrades as
        # training fits the training labels; the run must stop by epoch
        # best + patience.
        x, onehot = self._blob(rng)
        flipped = onehot[:, ::-1].copy()

        epochs_seen = []

        class CountingCE(nn.CrossEntropyLoss):
            def grad_logits(self, logits, onehot_, epoch=0):
                epochs_seen.append(epoch)
                return super().grad_logits(logits, onehot_, epoch)

        tcfg = nn.TrainConfig(0.02, 0.0, 120, seed=2, max_epochs=200, patience=8)
        nn.train(nn.MLPConfig(1, 8), tcfg, x, onehot, x, flipped, loss=CountingCE())
        n_epochs = len(set(epochs_seen))
        assert n_epochs <= 1 + 8 + 1  # best epoch, patience window, an off-by-one margin

    def test_divergence_raises(self, rng):
        # lr * weight_decay > 2 makes the decoupled decay factor unstable, so
        # the weights grow without bound until activations overflow.
        x, onehot = self._blob(rng)
        cfg = nn.MLPConfig(2, 16)
        tcfg = nn.TrainConfig(10.0, 1.0, 32, seed=0, max_epochs=200, patience=200)
        with pytest.raises(nn.TrainingDiverged):
            nn.train(cfg, tcfg, x, onehot, x, onehot)

    def test_class_symmetry_under_head_swap(self, rng):
        # Relabeled data + swapped output head, identical shuffles: the
        # trained class-2 probability equals the original class-1 probability
        # bit for bit.
        x, onehot = self._blob(rng)
        cfg = nn.MLPConfig(2, 12)
        init = nn.init_weights(cfg, np.random.default_rng(31))
        swapped = init.copy()
        swapped.weights[-1] = swapped.weights[-1][:, ::-1].copy()
        swapped.biases[-1] = swapped.biases[-1][::-1].copy()
        tcfg = nn.TrainConfig(0.01, 0.01, 40, seed=77, max_epochs=15, patience=15)
        net_a, _ = nn.train(cfg, tcfg, x, onehot, x, onehot, initial=init)
        net_b, _ = nn.train(cfg, tcfg, x, onehot[:, ::-1].copy(), x, onehot[:, ::-1].copy(),
                            initial=swapped)
        _, pa = nn.forward(net_a, x)
        _, pb = nn.forward(net_b, x)
        assert np.array_equal(pb[:, 1], pa[:, 0])
        assert np.allclose(pb[:, 1], 1.0 - pa[:, 1], atol=1e-12)


class TestScheduleAndCheckpoints:
    def test_batch_schedule(self):
        for n, b in [(250, 128), (500, 128), (1000, 256), (2000, 256),
                     (3000, 1024), (5000, 1024), (10000, 2048)]:
            assert nn.batch_size_for(n) == b
        assert nn.batch_size_for(100) == 128
        assert nn.batch_size_for(750) == 128
        assert nn.batch_size_for(50000) == 2048

    def test_size_presets(self):
        assert nn.MLPConfig.sized("small").layer_dims == [2, 20, 2]
        assert nn.MLPConfig.sized("medium").layer_dims == [2, 200, 200, 200, 2]
        assert nn.MLPConfig.sized("large").hidden_layers == 8

    def test_checkpoint_roundtrip(self, tmp_path, rng):
        net = nn.init_weights(nn.MLPConfig(2, 7), rng)
        path = tmp_path / "weights.json"
        nn.save_weights(path, net)
        loaded = nn.load_weights(path)
        for a, b in zip(net.params(), loaded.params()):
            assert np.array_equal(a, b)

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            nn.load_weights(tmp_path / "nope.json")
