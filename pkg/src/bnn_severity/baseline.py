"""Non-Bayesian reference network: dropout during training, early stopping,
deterministic point predictions (no predictive variance)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dropout import DropoutConfig, adam_epochs
from .errors import ConfigError
from .network import Architecture, DesignMatrix, ParamVector, _forward_fast, forward_batch


@dataclass(frozen=True)
class EarlyStopConfig:
    patience: int = 5
    validation_fraction: float = 0.2
    max_epochs: int = 200

    def __post_init__(self):
        if self.patience < 1 or self.max_epochs < 1:
            raise ValueError("patience and max_epochs must be positive")
        if self.patience > self.max_epochs:
            raise ValueError(f"patience {self.patience} exceeds max_epochs {self.max_epochs}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class EarlyStopper:
    """Tracks validation error and signals when it has stalled for ``patience`` epochs."""

    patience: int
    best_value: float = np.inf
    best_epoch: int = 0
    best_params: np.ndarray | None = None
    history: list = field(default_factory=list)

    def update(self, epoch, value, params=None) -> bool:
        """Record an epoch; returns True when training should stop."""
        self.history.append(value)
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.best_params = None if params is None else np.array(params, copy=True)
        return epoch - self.best_epoch >= self.patience


def stratified_split(y, fraction, rng, n_strata=4):
    """Split indices into (train, validation), sampling ``fraction`` of each target quantile bin."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n_strata > 1 and n >= n_strata:
        edges = np.quantile(y, np.linspace(0, 1, n_strata + 1)[1:-1])
        strata = np.searchsorted(edges, y, side="right")
    else:
        strata = np.zeros(n, dtype=int)
    val = []
    for s in np.unique(strata):
        members = rng.permutation(np.flatnonzero(strata == s))
        val.extend(members[: int(round(fraction * members.shape[0]))])
    val = np.sort(np.asarray(val, dtype=np.intp))
    train = np.setdiff1d(np.arange(n), val)
    return train, val


def train(arch: Architecture, data: DesignMatrix, dropout_rate: float, opt: DropoutConfig,
          stop: EarlyStopConfig, seed: int, validation: DesignMatrix | None = None,
          stopper: EarlyStopper | None = None):
    """Train with early stopping on a held-out validation split.

    Returns ``(params, stopped_epoch)`` where ``params`` are the weights from
    the epoch with the lowest validation MSE.  ``validation`` overrides the
    internal stratified split; pass an :class:`EarlyStopper` as ``stopper``
    to inspect the validation history afterwards.
    """
    rng = np.random.default_rng(seed)
    if validation is None:
        train_idx, val_idx = stratified_split(data.y, stop.validation_fraction, rng)
        if val_idx.shape[0] == 0 or train_idx.shape[0] == 0:
            raise ConfigError(
                f"validation split of {len(data)} rows at fraction {stop.validation_fraction} is empty"
            )
        fit_data, validation = data.subset(train_idx), data.subset(val_idx)
    else:
        fit_data = data
    if stopper is None:
        stopper = EarlyStopper(stop.patience)
    batch_size = min(opt.batch_size, len(fit_data))
    epoch = 0
    for epoch, w in adam_epochs(arch, fit_data, dropout_rate, opt.learning_rate, batch_size, rng):
        r = validation.y - _forward_fast(arch, w, validation.X)[0]
        if stopper.update(epoch, float(r @ r) / len(validation), w) or epoch >= stop.max_epochs:
            break
    return ParamVector(stopper.best_params, arch.layout), epoch


def predict(arch: Architecture, params, X_test) -> np.ndarray:
    """Point predictions; no dropout at test time."""
    return forward_batch(arch, params, X_test)
