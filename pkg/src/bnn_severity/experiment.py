"""Nested cross-validation with an inner grid search for each model family.

For every outer fold and family, each grid cell is trained on every inner
training split (preprocessing refitted per split) and scored by mean inner
validation MSE.  The best cell is refitted on the whole outer training split
and evaluated on the outer test split.  Every task seeds its own generator
from ``(seed, fold, family, cell, split)``, so results do not depend on how
tasks are scheduled across workers.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import baseline, dropout, hmc
from .bayes import BayesSpec
from .baseline import EarlyStopConfig
from .dropout import DropoutConfig
from .errors import BnnError, GridSearchError
from .hmc import HmcConfig
from .metrics import mse, paired_sq_error_test, smse
from .network import Architecture, DesignMatrix
from .predictive import PredictiveDistribution
from .preprocess import fit_preprocessor
from .report import FAMILIES, CvReport, FoldResult, assemble_report

log = logging.getLogger(__name__)

MIN_WIDTH, MAX_WIDTH = 100, 300


@dataclass(frozen=True)
class HyperGrid:
    architectures: tuple = ((100,), (200,), (300,), (100, 100), (200, 200), (300, 300))
    prior_precisions: tuple = (0.01, 0.1, 1.0, 10.0)
    dropout_rates: tuple = (0.0, 0.1, 0.25, 0.5)
    early_stop_patiences: tuple = (5, 20)
    learning_rates: tuple = (1e-3, 1e-2)
    activation: str = "tanh"
    # widths outside 100-300 are only allowed for tests and toy runs
    strict: bool = True

    def __post_init__(self):
        archs = tuple(tuple(int(w) for w in a) for a in self.architectures)
        object.__setattr__(self, "architectures", archs)
        for name in ("prior_precisions", "dropout_rates", "early_stop_patiences", "learning_rates"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not archs:
            raise ValueError("grid needs at least one architecture")
        for a in archs:
            if not 1 <= len(a) <= 2:
                raise ValueError(f"architecture {a} must have one or two hidden layers")
            if self.strict and any(not MIN_WIDTH <= w <= MAX_WIDTH for w in a):
                raise ValueError(f"architecture {a} has widths outside [{MIN_WIDTH}, {MAX_WIDTH}]")
        if any(not p > 0 for p in self.prior_precisions):
            raise ValueError("prior precisions must be positive")
        if any(not 0 <= r < 1 for r in self.dropout_rates):
            raise ValueError("dropout rates must lie in [0, 1)")
        if any(p < 1 for p in self.early_stop_patiences):
            raise ValueError("patiences must be positive")

    def cells(self, family) -> list:
        archs = [list(a) for a in self.architectures]
        if family == "hmc_bnn":
            return [{"hidden_layers": a, "prior_precision": p}
                    for a, p in itertools.product(archs, self.prior_precisions)]
        if family == "mc_dropout_bnn":
            return [{"hidden_layers": a, "dropout_rate": r, "learning_rate": lr}
                    for a, r, lr in itertools.product(archs, self.dropout_rates, self.learning_rates)]
        if family == "nn":
            return [{"hidden_layers": a, "dropout_rate": r, "patience": pt, "learning_rate": lr}
                    for a, r, pt, lr in itertools.product(
                        archs, self.dropout_rates, self.early_stop_patiences, self.learning_rates)]
        raise ValueError(f"unknown model family {family!r}")

    def to_dict(self):
        d = asdict(self)
        d["architectures"] = [list(a) for a in self.architectures]
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "architectures": tuple(tuple(a) for a in d["architectures"])})


@dataclass(frozen=True)
class ExperimentSettings:
    hmc: HmcConfig = HmcConfig()
    inner_hmc: HmcConfig = HmcConfig(num_samples=500, burn_in=250)
    dropout: DropoutConfig = DropoutConfig()
    early_stop: EarlyStopConfig = EarlyStopConfig()
    pca_k: int = 5
    whiten: bool = True
    # MC dropout's weight decay is lambda * sigma^2 / N with this lambda
    dropout_prior_precision: float = 1.0
    ridge_alpha: float = 1.0
    families: tuple = FAMILIES

    def to_dict(self):
        return {
            "hmc": self.hmc.to_dict(),
            "inner_hmc": self.inner_hmc.to_dict(),
            "dropout": self.dropout.to_dict(),
            "early_stop": self.early_stop.to_dict(),
            "pca_k": self.pca_k,
            "whiten": self.whiten,
            "dropout_prior_precision": self.dropout_prior_precision,
            "ridge_alpha": self.ridge_alpha,
            "families": list(self.families),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            hmc=HmcConfig(**d["hmc"]),
            inner_hmc=HmcConfig(**d["inner_hmc"]),
            dropout=DropoutConfig(**d["dropout"]),
            early_stop=EarlyStopConfig(**d["early_stop"]),
            pca_k=d["pca_k"],
            whiten=d["whiten"],
            dropout_prior_precision=d["dropout_prior_precision"],
            ridge_alpha=d["ridge_alpha"],
            families=tuple(d["families"]),
        )


def fast_grid() -> HyperGrid:
    return HyperGrid(
        architectures=((100,), (100, 100)),
        prior_precisions=(1.0, 10.0),
        dropout_rates=(0.1, 0.25),
        early_stop_patiences=(5,),
        learning_rates=(1e-2,),
    )


def fast_settings() -> ExperimentSettings:
    return ExperimentSettings(
        hmc=HmcConfig(step_size=0.05, leapfrog_steps=20, num_samples=200, burn_in=200, thinning=1),
        inner_hmc=HmcConfig(step_size=0.05, leapfrog_steps=20, num_samples=100, burn_in=150),
        dropout=DropoutConfig(t_samples=200, epochs=60, learning_rate=1e-2, batch_size=32),
        early_stop=EarlyStopConfig(patience=5, max_epochs=150),
    )


@dataclass
class FoldPlan:
    """Outer test folds and, per outer fold, inner validation folds (absolute indices)."""

    outer_folds: list
    inner_folds: list
    seed: int = 0

    @property
    def n(self):
        return int(sum(len(f) for f in self.outer_folds))

    def outer_train(self, k):
        return np.sort(np.concatenate([f for j, f in enumerate(self.outer_folds) if j != k]))

    def inner_train(self, k, j):
        folds = self.inner_folds[k]
        return np.sort(np.concatenate([f for i, f in enumerate(folds) if i != j]))


def make_fold_plan(n, seed, n_outer=5, n_inner=5) -> FoldPlan:
    """Shuffled, size-balanced nested folds; deterministic in ``seed``."""
    if n < 2 * n_outer:
        raise ValueError(f"need at least {2 * n_outer} rows for {n_outer}x{n_inner} nested folds, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    outer = [np.sort(f) for f in np.array_split(rng.permutation(n), n_outer)]
    inner = []
    for k in range(n_outer):
        train = np.sort(np.concatenate([f for j, f in enumerate(outer) if j != k]))
        if train.shape[0] < n_inner:
            raise ValueError("outer training split too small for the inner folds")
        inner.append([np.sort(f) for f in np.array_split(rng.permutation(train), n_inner)])
    return FoldPlan(outer, inner, seed)


def task_seed(seed, *keys) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)).generate_state(1, np.uint64)[0])


def ridge_noise_variance(Z, y, alpha=1.0) -> float:
    """Residual variance of a ridge fit (unpenalised intercept) on training data."""
    Zc = Z - Z.mean(axis=0)
    yc = y - y.mean()
    w = np.linalg.solve(Zc.T @ Zc + alpha * np.eye(Z.shape[1]), Zc.T @ yc)
    r = yc - Zc @ w
    return float(max(np.mean(r * r), 1e-8 * max(float(np.var(y)), 1.0)))


def fit_predict(family, cell, train: DesignMatrix, X_test, settings: ExperimentSettings, seed, inner=False):
    """Fit one family/cell on raw training rows and predict raw test rows.

    Targets are centred on the training mean (units unchanged) so that the
    zero-mean weight prior does not fight a large constant offset.  Returns
    ``(prediction, diagnostics)`` where ``prediction`` is a
    :class:`PredictiveDistribution` for the Bayesian families and a plain
    array for the baseline.
    """
    pre = fit_preprocessor(train.X, settings.pca_k, settings.whiten)
    Z = pre.transform(train.X)
    Z_test = pre.transform(X_test)
    offset = float(train.y.mean())
    data = DesignMatrix(Z, train.y - offset)
    arch = Architecture(settings.pca_k, tuple(cell["hidden_layers"]), activation=cell.get("activation", "tanh"))
    batch = min(settings.dropout.batch_size, len(data))

    if family == "hmc_bnn":
        noise = ridge_noise_variance(Z, train.y, settings.ridge_alpha)
        spec = BayesSpec.tied(arch, cell["prior_precision"], noise)
        config = replace(settings.inner_hmc if inner else settings.hmc, seed=seed)
        chain = hmc.run_chain(arch, spec, data, config)
        diag = {"acceptance_rate": chain.acceptance_rate, "step_size": chain.step_size,
                "n_divergent": chain.n_divergent, "noise_variance": noise}
        return hmc.predict(arch, spec, chain, Z_test).shifted(offset), diag

    if family == "mc_dropout_bnn":
        noise = ridge_noise_variance(Z, train.y, settings.ridge_alpha)
        spec = BayesSpec.tied(arch, settings.dropout_prior_precision, noise)
        config = replace(settings.dropout, dropout_rate=cell["dropout_rate"],
                         learning_rate=cell.get("learning_rate", settings.dropout.learning_rate),
                         batch_size=batch, seed=seed)
        params = dropout.train(arch, spec, data, config)
        return dropout.predict(arch, spec, params, Z_test, config).shifted(offset), {"noise_variance": noise}

    if family == "nn":
        opt = replace(settings.dropout, learning_rate=cell.get("learning_rate", settings.dropout.learning_rate),
                      batch_size=batch, seed=seed)
        patience = cell.get("patience", settings.early_stop.patience)
        stop = replace(settings.early_stop, patience=patience,
                       max_epochs=max(settings.early_stop.max_epochs, patience))
        params, stopped = baseline.train(arch, data, cell["dropout_rate"], opt, stop, seed)
        return baseline.predict(arch, params, Z_test) + offset, {"stopped_epoch": stopped}

    raise ValueError(f"unknown model family {family!r}")


def point_prediction(pred):
    return pred.mean if isinstance(pred, PredictiveDistribution) else np.asarray(pred)


def _tie_key(family, cell, score, index, input_dim):
    arch = Architecture(input_dim, tuple(cell["hidden_layers"]))
    if family == "hmc_bnn":
        secondary = -cell["prior_precision"]
    else:
        secondary = cell.get("dropout_rate", 0.0)
    return (score, arch.parameter_count, secondary, index)


@dataclass
class GridResult:
    family: str
    selected: dict
    index: int
    scores: list
    failures: list = field(default_factory=list)

    @property
    def score(self):
        return self.scores[self.index]


# worker-process state; set once per process by the pool initializer
_DATA = None
_SETTINGS = None


def _init_worker(data, settings):
    global _DATA, _SETTINGS
    _DATA, _SETTINGS = data, settings


def _inner_task(job):
    family, cell, train_idx, val_idx, seed = job
    try:
        pred, _ = fit_predict(family, cell, _DATA.subset(train_idx), _DATA.X[val_idx], _SETTINGS, seed, inner=True)
        return mse(_DATA.y[val_idx], point_prediction(pred)), None
    except (BnnError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _outer_task(job):
    family, cell, train_idx, test_idx, seed = job
    pred, diag = fit_predict(family, cell, _DATA.subset(train_idx), _DATA.X[test_idx], _SETTINGS, seed)
    return pred, diag


def _family_index(family):
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    return FAMILIES.index(family)


def inner_jobs(family, fold, plan: FoldPlan, grid: HyperGrid, seed):
    cells = grid.cells(family)
    jobs = []
    for c, cell in enumerate(cells):
        for j, val_idx in enumerate(plan.inner_folds[fold]):
            jobs.append((family, cell, plan.inner_train(fold, j), val_idx,
                         task_seed(seed, fold, _family_index(family), c, j)))
    return cells, jobs


def select_cell(family, cells, results, n_inner, input_dim) -> GridResult:
    """Average inner scores per cell and pick the minimum with the tie-break order."""
    scores, failures = [], []
    for c, cell in enumerate(cells):
        chunk = results[c * n_inner:(c + 1) * n_inner]
        errs = [e for _, e in chunk if e is not None]
        if errs:
            failures.append({"cell": cell, "errors": errs})
            scores.append(None)
        else:
            scores.append(float(np.mean([s for s, _ in chunk])))
    valid = [c for c, s in enumerate(scores) if s is not None]
    if not valid:
        raise GridSearchError(f"every {family} grid cell failed: {failures}", failures)
    best = min(valid, key=lambda c: _tie_key(family, cells[c], scores[c], c, input_dim))
    return GridResult(family, cells[best], best, scores, failures)


def grid_search(family, fold, plan: FoldPlan, grid: HyperGrid, data: DesignMatrix,
                settings: ExperimentSettings = ExperimentSettings(), seed=0, trainer=None, map_fn=None) -> GridResult:
    """Select hyperparameters for ``family`` using only outer fold ``fold``'s training rows.

    ``trainer(job) -> (score, error)`` replaces the real inner task (useful
    for stubbing); ``map_fn`` lets a pool evaluate the jobs.
    """
    cells, jobs = inner_jobs(family, fold, plan, grid, seed)
    if trainer is None:
        _init_worker(data, settings)
        trainer = _inner_task
    results = list((map_fn or map)(trainer, jobs))
    return select_cell(family, cells, results, len(plan.inner_folds[fold]), settings.pca_k)


def config_hash(payload) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _pool(workers, data, settings):
    if workers <= 1:
        _init_worker(data, settings)
        return None
    return ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(data, settings))


def run_experiment(data: DesignMatrix, grid: HyperGrid, plan: FoldPlan,
                   settings: ExperimentSettings = ExperimentSettings(), seed=0, workers=1,
                   cfg_hash=None, trainer=None, evaluator=None) -> CvReport:
    """Full nested cross-validation for every family in ``settings.families``.

    ``trainer`` / ``evaluator`` replace the inner and outer tasks (for stubs).
    """
    if plan.n != len(data):
        raise ValueError(f"fold plan covers {plan.n} rows, data has {len(data)}")
    pool = _pool(workers, data, settings)
    map_fn = map if pool is None else (lambda f, jobs: pool.map(f, jobs, chunksize=1))
    try:
        selections = {}
        for k in range(len(plan.outer_folds)):
            for family in settings.families:
                cells, jobs = inner_jobs(family, k, plan, grid, seed)
                results = list(map_fn(trainer or _inner_task, jobs))
                try:
                    selections[k, family] = select_cell(family, cells, results, len(plan.inner_folds[k]),
                                                        settings.pca_k)
                except GridSearchError as exc:
                    raise GridSearchError(f"outer fold {k + 1}, {family}: {exc}", exc.failures) from exc
                log.info("fold %d %s selected %s", k + 1, family, selections[k, family].selected)

        keys = sorted(selections, key=lambda kf: (kf[0], _family_index(kf[1])))
        outer_jobs = [
            (family, selections[k, family].selected, plan.outer_train(k), plan.outer_folds[k],
             task_seed(seed, k, _family_index(family), 10_000))
            for k, family in keys
        ]
        outputs = list(map_fn(evaluator or _outer_task, outer_jobs))
    finally:
        if pool is not None:
            pool.shutdown()

    folds = []
    sq_errors = {family: np.full(len(data), np.nan) for family in settings.families}
    for (k, family), (pred, diag) in zip(keys, outputs):
        test_idx = plan.outer_folds[k]
        y = data.y[test_idx]
        point = point_prediction(pred)
        sq_errors[family][test_idx] = (y - point) ** 2
        sel = selections[k, family]
        folds.append(FoldResult(
            family=family,
            fold=k + 1,
            mse=mse(y, point),
            smse=smse(y, pred) if isinstance(pred, PredictiveDistribution) else None,
            hyperparameters=dict(sel.selected),
            n_test=int(len(test_idx)),
            inner_score=sel.score,
            diagnostics=diag,
        ))

    tests = []
    for a, b in itertools.combinations(settings.families, 2):
        stat, p = paired_sq_error_test(sq_errors[a], sq_errors[b])
        tests.append({"a": a, "b": b, "statistic": float(stat), "p_value": float(p), "n": int(len(data))})

    run_settings = {"grid": grid.to_dict(), "experiment": settings.to_dict(), "n": len(data),
                    "plan_seed": plan.seed}
    if cfg_hash is None:
        cfg_hash = config_hash({**run_settings, "seed": seed})
    return assemble_report(folds, tests, seeds=[seed], config_hash=cfg_hash, settings=run_settings)
