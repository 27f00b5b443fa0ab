"""Multilayer perceptron with a flat parameter vector and hand-written backprop.

Weights are stored layer by layer: the ``fan_in x fan_out`` weight matrix in
row-major order followed by the ``fan_out`` bias vector.  The output layer is
affine, hidden layers use ``tanh`` (default) or ``relu``.

Two evaluation paths exist.  :func:`forward` / :func:`forward_batch` reduce
each row independently of how many rows are passed, so a batch is bitwise
equal to a loop of single-row calls.  The private ``_forward_fast`` /
``_backward_fast`` pair goes through BLAS and is what the samplers and
optimizers use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionError

ACTIVATIONS = ("tanh", "relu")
MAX_WIDTH = 1024

# elements per temporary in the row-independent path
_CHUNK_ELEMENTS = 1 << 22


class LayerSlice(NamedTuple):
    offset: int
    fan_in: int
    fan_out: int

    @property
    def size(self):
        return (self.fan_in + 1) * self.fan_out

    @property
    def weight_size(self):
        return self.fan_in * self.fan_out


@dataclass(frozen=True)
class Architecture:
    """Shape of the network.

    ``hidden_layers`` may be empty, giving a linear model; the experiment grid
    itself only uses one or two hidden layers.
    """

    input_dim: int
    hidden_layers: tuple[int, ...] = (100,)
    output_dim: int = 1
    activation: str = "tanh"
    layout: tuple[LayerSlice, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.hidden_layers)
        object.__setattr__(self, "hidden_layers", hidden)
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if len(hidden) > 2:
            raise ValueError(f"at most two hidden layers supported, got {len(hidden)}")
        for width in hidden:
            if not 1 <= width <= MAX_WIDTH:
                raise ValueError(f"hidden width {width} outside [1, {MAX_WIDTH}]")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        dims = (self.input_dim, *hidden, self.output_dim)
        layout, offset = [], 0
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            layout.append(LayerSlice(offset, fan_in, fan_out))
            offset += (fan_in + 1) * fan_out
        object.__setattr__(self, "layout", tuple(layout))

    @property
    def n_layers(self):
        return len(self.layout)

    @property
    def parameter_count(self):
        return sum(s.size for s in self.layout)

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_layers": list(self.hidden_layers),
            "output_dim": self.output_dim,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_layers=tuple(d["hidden_layers"]),
            output_dim=int(d.get("output_dim", 1)),
            activation=d.get("activation", "tanh"),
        )


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat parameter array plus the per-layer layout it is sliced by."""

    values: np.ndarray
    layout: tuple[LayerSlice, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("parameter values must be one-dimensional")
        expected = sum(s.size for s in self.layout)
        if values.shape[0] != expected:
            raise DimensionError(
                f"parameter vector has length {values.shape[0]}, layout needs {expected}",
                expected=expected,
                actual=values.shape[0],
            )
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def layers(self):
        """List of ``(W, b)`` views into ``values``."""
        return _unflatten(self.values, self.layout)

    def layer_values(self, l):
        s = self.layout[l]
        return self.values[s.offset:s.offset + s.size]

    def with_values(self, values):
        return ParamVector(values, self.layout)

    @classmethod
    def from_layers(cls, arch, layers):
        flat = np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])
        return cls(flat, arch.layout)


def _unflatten(values, layout):
    out = []
    for s in layout:
        w_end = s.offset + s.weight_size
        W = values[s.offset:w_end].reshape(s.fan_in, s.fan_out)
        b = values[w_end:w_end + s.fan_out]
        out.append((W, b))
    return out


def as_params(arch: Architecture, params) -> ParamVector:
    if isinstance(params, ParamVector):
        if params.layout != arch.layout:
            raise DimensionError("parameter layout does not match architecture")
        return params
    return ParamVector(params, arch.layout)


def zeros(arch: Architecture) -> ParamVector:
    return ParamVector(np.zeros(arch.parameter_count), arch.layout)


def init_params(arch: Architecture, rng: np.random.Generator) -> ParamVector:
    """Gaussian weights with std ``1/sqrt(fan_in)``; biases start at zero."""
    values = np.zeros(arch.parameter_count)
    for s in arch.layout:
        values[s.offset:s.offset + s.weight_size] = rng.normal(
            0.0, 1.0 / np.sqrt(s.fan_in), size=s.weight_size
        )
    return ParamVector(values, arch.layout)


def warm_start(arch: Architecture, data, rng) -> ParamVector:
    """:func:`init_params` with the output bias set to the mean target."""
    params = init_params(arch, rng)
    if len(data):
        params.values[-1] = float(np.mean(data.y))
    return params


def _activate(arch, z):
    if arch.activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_grad(arch, a):
    # expressed in terms of the post-activation value
    if arch.activation == "tanh":
        return 1.0 - a * a
    return (a > 0.0).astype(np.float64)


def _check_row(arch, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != arch.input_dim:
        actual = x.shape[-1] if x.ndim else 0
        raise DimensionError(
            f"expected input of dimension {arch.input_dim}, got {actual}",
            expected=arch.input_dim,
            actual=actual,
        )
    return x


def _check_rows(arch, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1 and X.shape[0] == 0:
        return X.reshape(0, arch.input_dim)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D row matrix, got shape {X.shape}")
    if X.shape[1] != arch.input_dim:
        raise DimensionError(
            f"row 0 has dimension {X.shape[1]}, expected {arch.input_dim}",
            expected=arch.input_dim,
            actual=X.shape[1],
            row=0,
        )
    return X


def _affine_rowwise(H, W, b):
    # row-independent H @ W + b: the reduction over fan_in runs in the same
    # order for every row regardless of how many rows are present
    n, fan_in = H.shape
    out = np.empty((n, W.shape[1]))
    step = max(1, _CHUNK_ELEMENTS // max(1, fan_in * W.shape[1]))
    for start in range(0, n, step):
        block = H[start:start + step, :, None] * W[None, :, :]
        out[start:start + step] = np.add.reduce(block, axis=1) + b
    return out


def _forward_rowwise(arch, layers, X, masks=None, scale=1.0):
    H = X
    for l, (W, b) in enumerate(layers[:-1]):
        H = _activate(arch, _affine_rowwise(H, W, b))
        if masks is not None:
            H = H * (masks[l] * scale)
    W, b = layers[-1]
    return _affine_rowwise(H, W, b)


def forward(arch: Architecture, params, x) -> float:
    """Network output for a single feature vector."""
    p = as_params(arch, params)
    x = _check_row(arch, x)
    return float(_forward_rowwise(arch, p.layers(), x[None, :])[0, 0])


def forward_batch(arch: Architecture, params, X) -> np.ndarray:
    """Outputs for each row of ``X``; equal bit-for-bit to per-row :func:`forward`."""
    p = as_params(arch, params)
    if isinstance(X, (list, tuple)):
        for i, row in enumerate(X):
            if np.ndim(row) != 1 or len(row) != arch.input_dim:
                raise DimensionError(
                    f"row {i} has dimension {np.size(row)}, expected {arch.input_dim}",
                    expected=arch.input_dim,
                    actual=np.size(row),
                    row=i,
                )
    X = _check_rows(arch, X)
    if X.shape[0] == 0:
        return np.zeros(0)
    return _forward_rowwise(arch, p.layers(), X)[:, 0]


def grad_params(arch: Architecture, params, x, upstream: float = 1.0) -> ParamVector:
    """Gradient of ``upstream * f(x)`` with respect to every parameter."""
    p = as_params(arch, params)
    x = _check_row(arch, x)
    grad = _backward_fast(arch, p.values, x[None, :], np.array([float(upstream)]))
    return ParamVector(grad, arch.layout)


# ---- BLAS path used by samplers and optimizers ---------------------------------


def _forward_fast(arch, values, X, masks=None, scale=1.0):
    """Return ``(outputs, layer_inputs, raw_activations)``.

    ``masks`` (one 0/1 array per hidden layer, broadcastable to the
    activations) multiply the hidden activations together with ``scale``.
    """
    layers = _unflatten(values, arch.layout)
    inputs, raws = [X], []
    H = X
    for l, (W, b) in enumerate(layers[:-1]):
        A = _activate(arch, H @ W + b)
        raws.append(A)
        H = A * (masks[l] * scale) if masks is not None else A
        inputs.append(H)
    W, b = layers[-1]
    return (H @ W + b)[:, 0], inputs, raws


def _backward_fast(arch, values, X, upstream, masks=None, scale=1.0, cache=None):
    """Gradient of ``sum_i upstream_i * f(x_i)`` as a flat array."""
    if cache is None:
        _, inputs, raws = _forward_fast(arch, values, X, masks, scale)
    else:
        inputs, raws = cache
    layers = _unflatten(values, arch.layout)
    grad = np.empty_like(values)
    delta = np.asarray(upstream, dtype=np.float64)[:, None]
    for l in range(len(layers) - 1, -1, -1):
        s = arch.layout[l]
        w_end = s.offset + s.weight_size
        grad[s.offset:w_end] = (inputs[l].T @ delta).ravel()
        grad[w_end:w_end + s.fan_out] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ layers[l][0].T) * _activation_grad(arch, raws[l - 1])
            if masks is not None:
                delta = delta * (masks[l - 1] * scale)
    return grad


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Feature rows ``X`` (N x D) with their regression targets ``y``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise DimensionError(f"design matrix must be 2-D, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DimensionError(
                f"{X.shape[0]} rows but {y.shape[0]} targets",
                expected=X.shape[0],
                actual=y.shape[0],
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("design matrix contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return DesignMatrix(self.X[idx], self.y[idx])
