"""Dropout training with Adam, and MC-dropout predictive sampling.

Dropout acts on hidden-unit activations only (inputs are never dropped) and
is inverted: kept units are scaled by ``1 / (1 - rate)`` during training and
at test time, so ``rate = 0`` is exactly the plain network.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from .bayes import BayesSpec
from .errors import DimensionError, TrainingError
from .network import (
    Architecture,
    DesignMatrix,
    ParamVector,
    _check_row,
    _check_rows,
    _forward_fast,
    _forward_rowwise,
    _backward_fast,
    as_params,
    warm_start,
)
from .predictive import PredictiveDistribution

# elements per (T, N, width) block at prediction time
_PREDICT_BLOCK = 1 << 22


@dataclass(frozen=True)
class DropoutConfig:
    dropout_rate: float = 0.0
    t_samples: int = 1000
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.t_samples < 1:
            raise ValueError("t_samples must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class DropoutMask:
    """One 0/1 keep-vector per hidden layer."""

    keep: tuple
    rate: float = 0.0

    def __post_init__(self):
        keep = tuple(np.asarray(k, dtype=np.float64) for k in self.keep)
        for k in keep:
            if not np.all((k == 0.0) | (k == 1.0)):
                raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "keep", keep)

    @property
    def scale(self):
        return 1.0 / (1.0 - self.rate)

    @classmethod
    def ones(cls, arch: Architecture, rate=0.0):
        return cls(tuple(np.ones(h) for h in arch.hidden_layers), rate)

    @classmethod
    def draw(cls, arch: Architecture, rate, rng):
        return cls(tuple((rng.random(h) >= rate).astype(np.float64) for h in arch.hidden_layers), rate)


def _check_mask(arch, mask):
    widths = tuple(k.shape[-1] for k in mask.keep)
    if widths != arch.hidden_layers:
        raise DimensionError(
            f"mask widths {widths} do not match hidden layers {arch.hidden_layers}",
            expected=arch.hidden_layers,
            actual=widths,
        )


def masked_forward(arch: Architecture, params, mask: DropoutMask, x) -> float:
    """Network output with dropped units zeroed and kept units rescaled."""
    p = as_params(arch, params)
    _check_mask(arch, mask)
    x = _check_row(arch, x)
    return float(_forward_rowwise(arch, p.layers(), x[None, :], mask.keep, mask.scale)[0, 0])


@dataclass
class TrainingLog:
    """Per-epoch full-data objective (no dropout) and update count."""

    epoch_losses: list = field(default_factory=list)
    n_updates: int = 0


def _objective(arch, values, data, decay):
    out = _forward_fast(arch, values, data.X)[0]
    r = data.y - out
    return float(r @ r) / len(data) + float(values @ (decay * values))


def weight_decay(arch: Architecture, spec: BayesSpec, n: int) -> np.ndarray:
    """Per-parameter decay ``lambda_l * sigma^2 / N``.

    With this coefficient, mean squared error plus decay is the negative log
    posterior rescaled by ``2 sigma^2 / N``.
    """
    return spec.precision_vector(arch) * spec.noise_variance / n


def adam_epochs(arch: Architecture, data: DesignMatrix, rate, learning_rate, batch_size, rng,
                decay=0.0, initial=None, log=None, beta1=0.9, beta2=0.999, eps=1e-8):
    """Yield ``(epoch, values)`` after each pass of minibatch Adam.

    A fresh dropout mask is drawn for every example in every minibatch.  The
    caller decides when to stop iterating.
    """
    n = len(data)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds dataset size {n}")
    w = (warm_start(arch, data, rng) if initial is None else as_params(arch, initial)).values.copy()
    decay = np.broadcast_to(np.asarray(decay, dtype=np.float64), w.shape)
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    scale = 1.0 / (1.0 - rate)
    t = 0
    for epoch in itertools.count(1):
        order = rng.permutation(n)
        for b, start in enumerate(range(0, n, batch_size)):
            idx = order[start:start + batch_size]
            X, y = data.X[idx], data.y[idx]
            masks = None
            if rate > 0 and arch.hidden_layers:
                masks = [(rng.random((len(idx), h)) >= rate).astype(np.float64) for h in arch.hidden_layers]
            out, inputs, raws = _forward_fast(arch, w, X, masks, scale)
            r = y - out
            loss = float(r @ r) / len(idx) + float(w @ (decay * w))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}", epoch=epoch, batch=b)
            g = _backward_fast(arch, w, X, -2.0 * r / len(idx), masks, scale, cache=(inputs, raws))
            g += 2.0 * decay * w
            t += 1
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            m_hat = m / (1 - beta1**t)
            v_hat = v / (1 - beta2**t)
            w = w - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        if log is not None:
            log.n_updates = t
            log.epoch_losses.append(_objective(arch, w, data, decay))
        yield epoch, w


def _streams(seed):
    train_seq, predict_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(train_seq), np.random.default_rng(predict_seq)


def train(arch: Architecture, spec: BayesSpec, data: DesignMatrix, config: DropoutConfig,
          log: TrainingLog | None = None, initial=None) -> ParamVector:
    """Fit a dropout network by minimising MSE plus the prior-derived weight decay."""
    rng, _ = _streams(config.seed)
    decay = weight_decay(arch, spec, len(data))
    w = None
    for epoch, w in adam_epochs(arch, data, config.dropout_rate, config.learning_rate,
                                config.batch_size, rng, decay, initial, log):
        if epoch >= config.epochs:
            break
    return ParamVector(w, arch.layout)


def mask_samples(arch: Architecture, params, X, rate, t_samples, rng) -> np.ndarray:
    """Outputs of ``t_samples`` masked passes over ``X``, shape ``(T, N)``.

    Each pass uses one mask shared by all rows.
    """
    p = as_params(arch, params)
    X = _check_rows(arch, X)
    layers = p.layers()
    n = X.shape[0]
    scale = 1.0 / (1.0 - rate)
    out = np.empty((t_samples, n))
    if not arch.hidden_layers or rate == 0.0:
        out[:] = _forward_fast(arch, p.values, X)[0]
        return out
    width = max(arch.hidden_layers)
    block = max(1, _PREDICT_BLOCK // max(1, n * width))
    for start in range(0, t_samples, block):
        t = min(block, t_samples - start)
        H = np.broadcast_to(X, (t, n, X.shape[1]))
        for W, b in layers[:-1]:
            A = np.tanh(H @ W + b) if arch.activation == "tanh" else np.maximum(H @ W + b, 0.0)
            keep = (rng.random((t, 1, W.shape[1])) >= rate).astype(np.float64)
            H = A * (keep * scale)
        W, b = layers[-1]
        out[start:start + t] = (H @ W + b)[..., 0]
    return out


def predict(arch: Architecture, spec: BayesSpec, params, X_test, config: DropoutConfig) -> PredictiveDistribution:
    """MC-dropout predictive distribution from ``config.t_samples`` masks."""
    _, rng = _streams(config.seed)
    samples = mask_samples(arch, params, X_test, config.dropout_rate, config.t_samples, rng)
    return PredictiveDistribution.from_samples(samples, spec.noise_variance)
