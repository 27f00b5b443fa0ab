"""Hamiltonian Monte Carlo over network weights.

Identity mass matrix, leapfrog integration and a Metropolis correction on the
total energy ``H = E(w) + |p|^2 / 2``.  During burn-in the step size is halved
(a bounded number of times) whenever the acceptance rate over a warm-up
window falls below a target.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .bayes import BayesSpec, Posterior
from .errors import DivergenceError
from .network import Architecture, DesignMatrix, ParamVector, _check_rows, _forward_fast, warm_start
from .predictive import PredictiveDistribution

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 0.01
    leapfrog_steps: int = 20
    num_samples: int = 2000
    burn_in: int = 1000
    thinning: int = 1
    seed: int = 0
    adapt_step_size: bool = True
    target_acceptance: float = 0.4
    max_halvings: int = 5

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be at least 1")
        if self.num_samples < 1:
            raise ValueError("num_samples must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class PhasePoint:
    position: np.ndarray
    momentum: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.momentum = np.asarray(self.momentum, dtype=np.float64)
        if self.position.shape != self.momentum.shape:
            raise ValueError("position and momentum must have identical shapes")


@dataclass(eq=False)
class HmcChain:
    """Post-burn-in, thinned draws (one row per sample) and run statistics."""

    samples: np.ndarray
    acceptance_rate: float
    energy_trace: np.ndarray
    seed: int
    step_size: float
    n_divergent: int = 0
    n_proposals: int = 0
    layout: tuple | None = field(default=None, repr=False)

    def __len__(self):
        return self.samples.shape[0]

    def params(self, i) -> ParamVector:
        return ParamVector(self.samples[i], self.layout)


def kinetic_energy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("momentum contains non-finite values")
    return 0.5 * float(p @ p) if p.ndim == 1 else 0.5 * float(np.sum(p * p))


def leapfrog(start: PhasePoint, step_size, n_steps, energy_fn, gradient_fn) -> PhasePoint:
    """Integrate ``n_steps`` leapfrog steps of size ``step_size``.

    Raises :class:`DivergenceError` (with the offending step index) when a
    gradient or the closing energy is not finite.
    """
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    q = np.array(start.position, dtype=np.float64)
    g = gradient_fn(q)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient at trajectory start", step=0)
    p = start.momentum - 0.5 * step_size * g
    for i in range(1, n_steps + 1):
        q = q + step_size * p
        g = gradient_fn(q)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient at leapfrog step {i}", step=i)
        if i < n_steps:
            p = p - step_size * g
    p = p - 0.5 * step_size * g
    if not np.isfinite(energy_fn(q)):
        raise DivergenceError(f"non-finite energy at leapfrog step {n_steps}", step=n_steps)
    return PhasePoint(q, p)


def _transition(q, energy_q, step_size, n_steps, energy_fn, gradient_fn, rng):
    p0 = rng.standard_normal(q.shape[0])
    h0 = energy_q + 0.5 * float(p0 @ p0)
    u = rng.random()
    try:
        end = leapfrog(PhasePoint(q, p0), step_size, n_steps, energy_fn, gradient_fn)
    except (DivergenceError, FloatingPointError):
        return q, energy_q, False, np.inf
    energy_new = energy_fn(end.position)
    delta_h = energy_new + 0.5 * float(end.momentum @ end.momentum) - h0
    if not np.isfinite(delta_h):
        return q, energy_q, False, np.inf
    if delta_h <= 0.0 or u < np.exp(-delta_h):
        return end.position, energy_new, True, delta_h
    return q, energy_q, False, delta_h


def hmc_step(current, config: HmcConfig, energy_fn, gradient_fn, rng, step_size=None):
    """One HMC transition.

    Returns ``(position, accepted, delta_h)``; a divergent proposal is
    rejected and reported with ``delta_h = inf``.
    """
    is_params = isinstance(current, ParamVector)
    q = current.values if is_params else np.asarray(current, dtype=np.float64)
    eps = config.step_size if step_size is None else step_size
    with np.errstate(over="ignore", invalid="ignore"):
        new, _, accepted, delta_h = _transition(
            q, energy_fn(q), eps, config.leapfrog_steps, energy_fn, gradient_fn, rng
        )
    if is_params:
        new = current.with_values(new)
    return new, accepted, delta_h


def sample(energy_fn, gradient_fn, initial, config: HmcConfig, rng=None) -> HmcChain:
    """Run a chain on an arbitrary differentiable target."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    layout = initial.layout if isinstance(initial, ParamVector) else None
    q = np.array(initial.values if layout is not None else initial, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        energy_q = energy_fn(q)
    if not np.isfinite(energy_q):
        raise DivergenceError("initial position has non-finite energy", step=0)

    eps = float(config.step_size)
    n_iter = config.burn_in + config.num_samples * config.thinning
    window = max(10, config.burn_in // 10)
    halvings = 0
    window_accepts = window_count = 0
    accepted_total = divergent = 0
    kept = np.empty((config.num_samples, q.shape[0]))
    energies = np.empty(n_iter)
    n_kept = 0

    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(n_iter):
            q, energy_q, accepted, delta_h = _transition(
                q, energy_q, eps, config.leapfrog_steps, energy_fn, gradient_fn, rng
            )
            accepted_total += accepted
            divergent += not np.isfinite(delta_h)
            energies[it] = energy_q
            if it < config.burn_in:
                window_accepts += accepted
                window_count += 1
                if window_count == window:
                    if (
                        config.adapt_step_size
                        and window_accepts / window < config.target_acceptance
                        and halvings < config.max_halvings
                    ):
                        eps *= 0.5
                        halvings += 1
                        log.debug("warm-up acceptance %.2f, step size -> %g", window_accepts / window, eps)
                    window_accepts = window_count = 0
            elif (it - config.burn_in + 1) % config.thinning == 0:
                kept[n_kept] = q
                n_kept += 1

    if divergent > 0.9 * n_iter:
        raise DivergenceError(
            f"{divergent} of {n_iter} transitions diverged; reduce the step size "
            f"(currently {eps:g})"
        )
    return HmcChain(
        samples=kept,
        acceptance_rate=accepted_total / n_iter,
        energy_trace=energies,
        seed=config.seed,
        step_size=eps,
        n_divergent=divergent,
        n_proposals=n_iter,
        layout=layout,
    )


def run_chain(arch: Architecture, spec: BayesSpec, data: DesignMatrix, config: HmcConfig,
              initial=None) -> HmcChain:
    """Sample network weights from their posterior given ``data``."""
    if len(data) == 0:
        raise ValueError("run_chain needs at least one data point")
    rng = np.random.default_rng(config.seed)
    if initial is None:
        initial = warm_start(arch, data, rng)
    elif not isinstance(initial, ParamVector):
        initial = ParamVector(initial, arch.layout)
    posterior = Posterior(arch, spec, data)
    return sample(posterior.energy, posterior.gradient, initial, config, rng=rng)


def predict(arch: Architecture, spec: BayesSpec, chain: HmcChain, X_test) -> PredictiveDistribution:
    """Posterior predictive mean and variance from the chain's draws."""
    return predict_from_samples(arch, spec, chain.samples, X_test)


def predict_from_samples(arch: Architecture, spec: BayesSpec, samples, X_test) -> PredictiveDistribution:
    """Predictive distribution from a ``(S, P)`` matrix of weight draws."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("cannot predict from an empty chain")
    X_test = _check_rows(arch, X_test)
    outputs = np.empty((samples.shape[0], X_test.shape[0]))
    for s, w in enumerate(samples):
        outputs[s] = _forward_fast(arch, w, X_test)[0]
    return PredictiveDistribution.from_samples(outputs, spec.noise_variance)
