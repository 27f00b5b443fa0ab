import numpy as np
import pytest

from bnn_severity.network import Architecture, ParamVector


def central_difference(fn, w, h=1e-5):
    """Central finite-difference gradient of a scalar function of a flat array."""
    w = np.array(w, dtype=np.float64)
    grad = np.empty_like(w)
    for i in range(w.shape[0]):
        up, down = w.copy(), w.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fn(up) - fn(down)) / (2 * h)
    return grad


def max_relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def random_instance(rng, max_width=16, max_input=6, activation="tanh"):
    depth = int(rng.integers(1, 3))
    hidden = tuple(int(h) for h in rng.integers(1, max_width + 1, size=depth))
    arch = Architecture(int(rng.integers(1, max_input + 1)), hidden, activation=activation)
    values = rng.normal(0.0, 0.7, size=arch.parameter_count)
    return arch, ParamVector(values, arch.layout)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
