"""Gaussian weight prior, Gaussian likelihood and the resulting potential energy.

The prior places an isotropic Gaussian ``N(0, I / lambda_l)`` on all
parameters (weights and biases) of layer ``l``; the likelihood is
``N(f(x), sigma^2)``.  Normalising constants are kept so that densities under
different precisions can be compared directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .network import Architecture, DesignMatrix, ParamVector, _backward_fast, _forward_fast, as_params

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class BayesSpec:
    layer_precisions: tuple[float, ...]
    noise_variance: float

    def __post_init__(self):
        precisions = tuple(float(v) for v in self.layer_precisions)
        object.__setattr__(self, "layer_precisions", precisions)
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if not precisions:
            raise ValueError("at least one layer precision is required")
        if any(not (v > 0 and np.isfinite(v)) for v in precisions):
            raise ValueError(f"layer precisions must be positive, got {precisions}")
        if not (self.noise_variance > 0 and np.isfinite(self.noise_variance)):
            raise ValueError(f"noise variance must be positive, got {self.noise_variance}")

    @classmethod
    def tied(cls, arch: Architecture, precision: float, noise_variance: float):
        """Same precision for every layer."""
        return cls((precision,) * arch.n_layers, noise_variance)

    def check(self, arch_or_params):
        layout = arch_or_params.layout
        if len(layout) != len(self.layer_precisions):
            raise DimensionError(
                f"BayesSpec has {len(self.layer_precisions)} layer precisions, "
                f"network has {len(layout)} layers",
                expected=len(layout),
                actual=len(self.layer_precisions),
            )

    def precision_vector(self, arch: Architecture) -> np.ndarray:
        """Per-parameter precision, laid out like a parameter vector."""
        self.check(arch)
        out = np.empty(arch.parameter_count)
        for lam, s in zip(self.layer_precisions, arch.layout):
            out[s.offset:s.offset + s.size] = lam
        return out

    def to_dict(self):
        return {"layer_precisions": list(self.layer_precisions), "noise_variance": self.noise_variance}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["layer_precisions"]), d["noise_variance"])


def log_prior(spec: BayesSpec, params: ParamVector) -> float:
    spec.check(params)
    total = 0.0
    for l, lam in enumerate(spec.layer_precisions):
        w = params.layer_values(l)
        n = w.shape[0]
        total += -0.5 * lam * float(w @ w) + 0.5 * n * (np.log(lam) - LOG_2PI)
    return total


def _residuals(arch, params, data):
    if data.X.shape[0] and data.X.shape[1] != arch.input_dim:
        raise DimensionError(
            f"data has {data.X.shape[1]} features, network expects {arch.input_dim}",
            expected=arch.input_dim,
            actual=data.X.shape[1],
        )
    out, inputs, raws = _forward_fast(arch, params.values, data.X)
    return data.y - out, (inputs, raws)


def log_likelihood(arch: Architecture, spec: BayesSpec, params, data: DesignMatrix) -> float:
    params = as_params(arch, params)
    if len(data) == 0:
        return 0.0
    r, _ = _residuals(arch, params, data)
    s2 = spec.noise_variance
    return float(-0.5 * (r @ r) / s2 - 0.5 * len(data) * (LOG_2PI + np.log(s2)))


def potential_energy(arch: Architecture, spec: BayesSpec, params, data: DesignMatrix) -> float:
    """Negative unnormalised log posterior (the evidence term is dropped)."""
    params = as_params(arch, params)
    return -(log_prior(spec, params) + log_likelihood(arch, spec, params, data))


def potential_gradient(arch: Architecture, spec: BayesSpec, params, data: DesignMatrix) -> ParamVector:
    params = as_params(arch, params)
    return params.with_values(_energy_and_gradient(arch, spec, params, data)[1])


def _energy_and_gradient(arch, spec, params, data, lam=None):
    """Energy and its gradient from a single forward/backward pass."""
    spec.check(arch)
    if lam is None:
        lam = spec.precision_vector(arch)
    w = params.values
    energy = 0.5 * float(w @ (lam * w))
    for l, s in enumerate(arch.layout):
        energy -= 0.5 * s.size * (np.log(spec.layer_precisions[l]) - LOG_2PI)
    grad = lam * w
    if len(data):
        r, cache = _residuals(arch, params, data)
        s2 = spec.noise_variance
        energy += 0.5 * float(r @ r) / s2 + 0.5 * len(data) * (LOG_2PI + np.log(s2))
        grad = grad + _backward_fast(arch, w, data.X, -r / s2, cache=cache)
    return energy, grad


class Posterior:
    """Callable energy/gradient pair over raw parameter arrays, for the sampler.

    Caches the last forward/backward pass so that a leapfrog trajectory's
    closing energy evaluation reuses the final gradient computation.
    """

    def __init__(self, arch: Architecture, spec: BayesSpec, data: DesignMatrix):
        spec.check(arch)
        self.arch = arch
        self.spec = spec
        self.data = data
        self._lam = spec.precision_vector(arch)
        self._key = None
        self._value = None

    def _eval(self, w):
        if self._key is None or not np.array_equal(self._key, w):
            params = ParamVector(w, self.arch.layout)
            self._value = _energy_and_gradient(self.arch, self.spec, params, self.data, self._lam)
            self._key = np.array(w, copy=True)
        return self._value

    def energy(self, w) -> float:
        return self._eval(w)[0]

    def gradient(self, w) -> np.ndarray:
        return self._eval(w)[1]
