"""Command-line entry point.

Settings come from built-in defaults (``--fast`` selects the reduced
profile), then an optional JSON ``--config`` file, then flags; later sources
win.  A config file may contain::

    {"data": "cohort.csv", "synthetic": {"n_patients": 40}, "seeds": [0, 1],
     "workers": 4, "fast": true, "grid": {...}, "settings": {...},
     "model": {"hidden_layers": [100], "prior_precision": 1.0}}

where ``grid`` and ``settings`` override fields of :class:`HyperGrid` and
:class:`ExperimentSettings` (nested sampler/optimiser sections merge key by
key).  Failures print one ``error: <category>: <detail>`` line to stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__, hmc
from .artifacts import ModelArtifact, load_artifact, save_artifact
from .bayes import BayesSpec
from .data import CohortSpec, generate_cohort, load_csv, write_csv
from .diagnostics import summarize
from .errors import BnnError, ConfigError
from .experiment import (
    ExperimentSettings,
    HyperGrid,
    config_hash,
    fast_grid,
    fast_settings,
    make_fold_plan,
    ridge_noise_variance,
    run_experiment,
)
from .network import Architecture, DesignMatrix
from .preprocess import fit_preprocessor
from .report import read_report, render_table, to_structured, write_report

EXIT_CODES = {
    "usage": 2,
    "data": 65,
    "dimension": 65,
    "io": 74,
    "config": 78,
    "divergence": 70,
    "training": 70,
    "grid": 70,
    "error": 70,
}
NESTED = ("hmc", "inner_hmc", "dropout", "early_stop")
DEFAULT_MODEL = {"hidden_layers": [100], "prior_precision": 1.0}


@dataclass
class RunConfig:
    data: str | None = None
    cohort: CohortSpec | None = None
    seeds: list = field(default_factory=lambda: [0])
    workers: int = 1
    out: str | None = None
    fast: bool = False
    format: str = "table"
    grid: HyperGrid = field(default_factory=HyperGrid)
    settings: ExperimentSettings = field(default_factory=ExperimentSettings)
    model: dict = field(default_factory=lambda: dict(DEFAULT_MODEL))
    # cohort seed follows the run seed unless the config pins it
    cohort_seed_pinned: bool = False

    def canonical(self) -> dict:
        """Everything that can change results; worker count and paths are excluded."""
        return {
            "data": None if self.data is None else _file_digest(self.data),
            "cohort": None if self.cohort is None else self.cohort.to_dict(),
            "cohort_seed_pinned": self.cohort_seed_pinned,
            "seeds": list(self.seeds),
            "fast": self.fast,
            "grid": self.grid.to_dict(),
            "settings": self.settings.to_dict(),
            "model": self.model,
        }

    def hash(self) -> str:
        return config_hash(self.canonical())

    def cohort_for(self, seed) -> CohortSpec:
        if self.cohort_seed_pinned:
            return self.cohort
        return CohortSpec(**{**self.cohort.to_dict(), "seed": seed})


def _file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _read_config_file(path):
    if path is None:
        return {}
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def _merge_settings(base: ExperimentSettings, overrides: dict) -> ExperimentSettings:
    merged = base.to_dict()
    for key, value in overrides.items():
        if key not in merged:
            raise ConfigError(f"unknown settings key {key!r}")
        if key in NESTED:
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return ExperimentSettings.from_dict(merged)


def build_config(args) -> RunConfig:
    doc = _read_config_file(getattr(args, "config", None))
    known = {"data", "synthetic", "seed", "seeds", "workers", "out", "fast", "format", "grid", "settings", "model"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        fast = bool(getattr(args, "fast", False) or doc.get("fast", False))
        grid_base = fast_grid() if fast else HyperGrid()
        grid = HyperGrid.from_dict({**grid_base.to_dict(), **doc.get("grid", {})})
        settings = _merge_settings(fast_settings() if fast else ExperimentSettings(), doc.get("settings", {}))

        if getattr(args, "seed", None) is not None:
            seeds = [args.seed]
        else:
            seeds = [int(s) for s in doc.get("seeds", [doc.get("seed", 0)])]
        if not seeds:
            raise ConfigError("at least one seed is required")

        data = getattr(args, "data", None)
        synthetic = getattr(args, "synthetic", False)
        if data and synthetic:
            raise ConfigError("--data and --synthetic are mutually exclusive")
        if not data and not synthetic:
            data = doc.get("data")
            synthetic = data is None and bool(doc.get("synthetic"))
        cohort, pinned = None, False
        if synthetic:
            fields = doc.get("synthetic") if isinstance(doc.get("synthetic"), dict) else {}
            pinned = "seed" in fields
            cohort = CohortSpec(**{"seed": seeds[0], **fields})

        workers = getattr(args, "workers", None) or doc.get("workers", 1)
        if int(workers) < 1:
            raise ConfigError(f"--workers must be at least 1, got {workers}")
        model = {**DEFAULT_MODEL, **doc.get("model", {})}
        Architecture(settings.pca_k, tuple(model["hidden_layers"]))
        if not model["prior_precision"] > 0:
            raise ConfigError("model prior_precision must be positive")
        fmt = getattr(args, "format", None) or doc.get("format", "table")
        if fmt not in ("table", "structured"):
            raise ConfigError(f"unknown format {fmt!r}")
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, BnnError):
            raise
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return RunConfig(
        data=data,
        cohort=cohort,
        seeds=seeds,
        workers=int(workers),
        out=getattr(args, "out", None) or doc.get("out"),
        fast=fast,
        format=fmt,
        grid=grid,
        settings=settings,
        model=model,
        cohort_seed_pinned=pinned,
    )


def _load(config: RunConfig, seed):
    if config.data is not None:
        return load_csv(config.data, return_ids=True)
    if config.cohort is None:
        raise ConfigError("no data source: pass --data PATH or --synthetic")
    data = generate_cohort(config.cohort_for(seed))
    return data, [f"p{i:04d}" for i in range(1, len(data) + 1)]


def _emit(text, path=None):
    if path is None:
        sys.stdout.write(text)
    else:
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)


def cmd_run(args) -> int:
    config = build_config(args)
    out = config.out or "results"
    if config.data is not None and not os.path.isfile(config.data):
        raise FileNotFoundError(f"data file {config.data} does not exist")
    data = _load(config, config.seeds[0])[0] if config.data is not None else None
    reports = []
    for seed in config.seeds:
        seed_data = data if data is not None else _load(config, seed)[0]
        plan = make_fold_plan(len(seed_data), seed)
        reports.append(run_experiment(seed_data, config.grid, plan, config.settings, seed=seed,
                                      workers=config.workers, cfg_hash=config.hash()))
    # nothing is written until every seed has finished
    os.makedirs(out, exist_ok=True)
    for seed, report in zip(config.seeds, reports):
        stem = "report" if len(config.seeds) == 1 else f"report-seed{seed}"
        write_report(report, os.path.join(out, f"{stem}.txt"), "table")
        write_report(report, os.path.join(out, f"{stem}.json"), "structured")
        sys.stdout.write(render_table(report) if config.format == "table" else to_structured(report))
    return 0


def cmd_generate(args) -> int:
    args.synthetic = True
    config = build_config(args)
    data = generate_cohort(config.cohort)
    out = config.out or "cohort.csv"
    parent = os.path.dirname(os.path.abspath(out))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"directory {parent} does not exist")
    write_csv(out, data)
    print(f"wrote {len(data)} rows x {data.n_features} features to {out}")
    return 0


def cmd_sample(args) -> int:
    config = build_config(args)
    seed = config.seeds[0]
    (data, _ids) = _load(config, seed)
    settings = config.settings
    pre = fit_preprocessor(data.X, settings.pca_k, settings.whiten)
    Z = pre.transform(data.X)
    offset = float(data.y.mean())
    arch = Architecture(settings.pca_k, tuple(config.model["hidden_layers"]))
    noise = ridge_noise_variance(Z, data.y, settings.ridge_alpha)
    spec = BayesSpec.tied(arch, config.model["prior_precision"], noise)
    hmc_config = replace(settings.hmc, seed=seed)
    chain = hmc.run_chain(arch, spec, DesignMatrix(Z, data.y - offset), hmc_config)
    diag = summarize(chain)
    artifact = ModelArtifact(
        family="hmc_bnn",
        arch=arch,
        samples=np.asarray(chain.samples),
        spec=spec,
        config=hmc_config.to_dict(),
        seed=seed,
        preprocessor=pre,
        metadata={"target_offset": offset, "diagnostics": diag, "config_hash": config.hash(),
                  "version": __version__},
    )
    out = config.out or "chain.bnn"
    save_artifact(out, artifact)
    sys.stdout.write(json.dumps({"artifact": out, **diag}, sort_keys=True) + "\n")
    return 0


def cmd_predict(args) -> int:
    if args.model is None:
        raise ConfigError("--model PATH is required")
    if args.data is None:
        raise ConfigError("--data PATH is required")
    artifact = load_artifact(args.model)
    if artifact.family != "hmc_bnn" or artifact.preprocessor is None:
        raise ConfigError(f"{args.model} is not a sampled chain artifact")
    data, ids = load_csv(args.data, return_ids=True)
    Z = artifact.preprocessor.transform(data.X)
    pred = hmc.predict_from_samples(artifact.arch, artifact.spec, artifact.samples, Z)
    pred = pred.shifted(artifact.metadata.get("target_offset", 0.0))
    lines = ["id,mean,variance"]
    lines += [f"{i},{m!r},{v!r}" for i, m, v in zip(ids, pred.mean.tolist(), pred.variance.tolist())]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_report(args) -> int:
    report = read_report(args.path)
    fmt = args.format or "table"
    if args.out is None:
        sys.stdout.write(render_table(report) if fmt == "table" else to_structured(report))
    else:
        write_report(report, args.out, fmt)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bnn-severity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="JSON config file; flags override its values")
        if data:
            p.add_argument("--data", help="cohort CSV (id,target,f0001,...)")
            p.add_argument("--synthetic", action="store_true", help="use a generated cohort")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--fast", action="store_true", help="reduced grid, chains and epochs")

    p = sub.add_parser("run", help="nested cross-validation of all model families")
    common(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--format", choices=("table", "structured"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("generate", help="write a synthetic cohort CSV")
    common(p, data=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", help="run one HMC chain and save it as an artifact")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("predict", help="apply a saved chain artifact to a CSV")
    p.add_argument("--model", help="artifact written by `sample`")
    p.add_argument("--data")
    p.add_argument("--out", help="predictions CSV (stdout if omitted)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="re-render a structured report")
    p.add_argument("path")
    p.add_argument("--format", choices=("table", "structured"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(category, detail) -> int:
    detail = " ".join(str(detail).split())
    sys.stderr.write(f"error: {category}: {detail}\n")
    return EXIT_CODES.get(category, 70)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BnnError as exc:
        return _fail(exc.category, exc)
    except OSError as exc:
        return _fail("io", exc)
    except ValueError as exc:
        return _fail("config", exc)


if __name__ == "__main__":
    sys.exit(main())
