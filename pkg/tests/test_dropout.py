import itertools

import numpy as np
import pytest

from bnn_severity.bayes import BayesSpec
from bnn_severity.dropout import (
    DropoutConfig,
    DropoutMask,
    TrainingLog,
    masked_forward,
    predict,
    train,
)
from bnn_severity.errors import DimensionError
from bnn_severity.network import Architecture, DesignMatrix, ParamVector, forward, init_params


def exhaustive_mean(arch, params, x, rate):
    """Expectation over every keep/drop pattern of the hidden units, by enumeration."""
    layers = params.layers()
    total = sum(arch.hidden_layers)
    mean = 0.0
    for bits in itertools.product((0, 1), repeat=total):
        kept = sum(bits)
        weight = (1 - rate) ** kept * rate ** (total - kept)
        h = np.asarray(x, dtype=float)
        pos = 0
        for W, b in layers[:-1]:
            width = W.shape[1]
            keep = np.array(bits[pos:pos + width], dtype=float)
            pos += width
            h = np.tanh(h @ W + b) * keep / (1 - rate)
        W, b = layers[-1]
        mean += weight * float(h @ W[:, 0] + b[0])
    return mean


def line_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 1))
    return DesignMatrix(x, 2.0 * x[:, 0])


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"dropout_rate": 1.0}, {"dropout_rate": -0.1}, {"t_samples": 0}, {"epochs": 0}, {"learning_rate": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            DropoutConfig(**kwargs)


class TestMaskedForward:
    def test_all_ones_rate_zero(self, rng):
        arch = Architecture(4, (5, 3))
        p = init_params(arch, rng)
        x = rng.normal(size=4)
        assert masked_forward(arch, p, DropoutMask.ones(arch), x) == forward(arch, p, x)

    def test_all_zeros_gives_output_bias(self, rng):
        arch = Architecture(4, (5, 3))
        values = rng.normal(size=arch.parameter_count)
        p = ParamVector(values, arch.layout)
        mask = DropoutMask(tuple(np.zeros(h) for h in arch.hidden_layers), 0.3)
        assert masked_forward(arch, p, mask, rng.normal(size=4)) == values[-1]

    def test_manual_composition_321(self):
        arch = Architecture(3, (2,))
        W1 = np.array([[0.5, -1.0], [0.2, 0.3], [-0.7, 0.1]])
        b1 = np.array([0.1, -0.2])
        W2 = np.array([[1.5], [-2.0]])
        b2 = np.array([0.25])
        p = ParamVector.from_layers(arch, [(W1, b1), (W2, b2)])
        x = np.array([1.0, -2.0, 0.5])
        rate = 0.4
        # unit 0 dropped, unit 1 kept and scaled by 1/0.6
        h1 = np.tanh(x[0] * W1[0, 1] + x[1] * W1[1, 1] + x[2] * W1[2, 1] + b1[1])
        expected = h1 / 0.6 * W2[1, 0] + b2[0]
        got = masked_forward(arch, p, DropoutMask((np.array([0.0, 1.0]),), rate), x)
        assert got == pytest.approx(expected, rel=1e-14)

    def test_shape_mismatch(self, rng):
        arch = Architecture(2, (3,))
        with pytest.raises(DimensionError):
            masked_forward(arch, init_params(arch, rng), DropoutMask((np.ones(4),)), [0.0, 0.0])

    def test_non_binary_mask(self):
        with pytest.raises(ValueError):
            DropoutMask((np.array([0.5, 1.0]),))


class TestTrain:
    def test_recovers_slope(self):
        arch = Architecture(1, ())
        data = line_data()
        config = DropoutConfig(dropout_rate=0.0, epochs=300, learning_rate=0.05, batch_size=8, seed=1)
        # negligible prior so the least-squares slope is the target
        p = train(arch, BayesSpec((1e-8,), 1.0), data, config)
        W, b = p.layers()[0]
        assert abs(W[0, 0] - 2.0) < 1e-2
        assert abs(b[0]) < 1e-2

    @pytest.mark.parametrize("n,batch", [(40, 8), (41, 8), (10, 10), (10, 3)])
    def test_one_epoch_update_count(self, n, batch):
        arch = Architecture(1, (3,))
        log = TrainingLog()
        train(arch, BayesSpec.tied(arch, 1.0, 1.0), line_data(n), DropoutConfig(epochs=1, batch_size=batch), log=log)
        assert log.n_updates == -(-n // batch)
        assert len(log.epoch_losses) == 1

    def test_deterministic(self):
        arch = Architecture(1, (8,))
        config = DropoutConfig(dropout_rate=0.3, epochs=5, batch_size=8, seed=4)
        spec = BayesSpec.tied(arch, 1.0, 0.5)
        a = train(arch, spec, line_data(), config)
        b = train(arch, spec, line_data(), config)
        assert np.array_equal(a.values, b.values)

    def test_loss_mostly_non_increasing_linear(self):
        arch = Architecture(1, ())
        log = TrainingLog()
        config = DropoutConfig(dropout_rate=0.0, epochs=60, learning_rate=0.01, batch_size=10, seed=3)
        train(arch, BayesSpec((1.0,), 1.0), line_data(), config, log=log)
        losses = np.array(log.epoch_losses)
        assert np.mean(np.diff(losses) <= 0) >= 0.9

    def test_batch_larger_than_data(self):
        arch = Architecture(1, ())
        with pytest.raises(ValueError):
            train(arch, BayesSpec((1.0,), 1.0), line_data(5), DropoutConfig(batch_size=6))

    def test_weight_decay_shrinks(self):
        arch = Architecture(1, (6,))
        data = line_data()
        config = DropoutConfig(epochs=40, learning_rate=0.01, batch_size=8, seed=0)
        weak = train(arch, BayesSpec.tied(arch, 1e-3, 1.0), data, config)
        strong = train(arch, BayesSpec.tied(arch, 1e3, 1.0), data, config)
        assert np.linalg.norm(strong.values) < np.linalg.norm(weak.values)


class TestPredict:
    def test_rate_zero_is_deterministic(self, rng):
        arch = Architecture(3, (6, 4))
        p = init_params(arch, rng)
        X = rng.normal(size=(7, 3))
        pred = predict(arch, BayesSpec.tied(arch, 1.0, 0.9), p, X, DropoutConfig(dropout_rate=0.0, t_samples=50))
        assert np.all(pred.samples == pred.samples[0])
        assert np.all(pred.variance == 0.9)

    def test_single_sample(self, rng):
        arch = Architecture(3, (6,))
        p = init_params(arch, rng)
        pred = predict(arch, BayesSpec.tied(arch, 1.0, 0.4), p, rng.normal(size=(3, 3)),
                       DropoutConfig(dropout_rate=0.5, t_samples=1))
        assert np.all(pred.variance == 0.4)

    def test_variance_at_least_noise(self, rng):
        arch = Architecture(3, (6,))
        p = init_params(arch, rng)
        pred = predict(arch, BayesSpec.tied(arch, 1.0, 0.4), p, rng.normal(size=(20, 3)),
                       DropoutConfig(dropout_rate=0.5, t_samples=64))
        assert np.all(pred.variance >= 0.4)

    @pytest.mark.parametrize("hidden", [(6,), (5, 5), (10,)])
    def test_matches_exhaustive_enumeration(self, hidden):
        rng = np.random.default_rng(sum(hidden))
        arch = Architecture(2, hidden)
        p = ParamVector(rng.normal(size=arch.parameter_count), arch.layout)
        X = rng.normal(size=(4, 2))
        pred = predict(arch, BayesSpec.tied(arch, 1.0, 1.0), p, X,
                       DropoutConfig(dropout_rate=0.5, t_samples=10_000, seed=2))
        exact = np.array([exhaustive_mean(arch, p, x, 0.5) for x in X])
        se = pred.samples.std(axis=0, ddof=1) / np.sqrt(10_000)
        assert np.all(np.abs(pred.mean - exact) < 3 * se)

    def test_deterministic(self, rng):
        arch = Architecture(3, (6,))
        p = init_params(arch, rng)
        X = rng.normal(size=(5, 3))
        config = DropoutConfig(dropout_rate=0.3, t_samples=40, seed=8)
        spec = BayesSpec.tied(arch, 1.0, 1.0)
        assert np.array_equal(predict(arch, spec, p, X, config).samples, predict(arch, spec, p, X, config).samples)
