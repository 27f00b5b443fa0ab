"""Cross-validation report: per-fold and aggregate metrics per model family.

The structured form is canonical JSON (sorted keys, fixed indentation), so
writing, parsing and writing again gives identical bytes.  The table form
mirrors the usual MSE/SMSE-by-test-set layout with ``n.a.`` where a family
has no predictive variance.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__

FAMILIES = ("hmc_bnn", "mc_dropout_bnn", "nn")
FAMILY_LABELS = {"hmc_bnn": "HMC BNN", "mc_dropout_bnn": "MC dropout BNN", "nn": "NN"}


@dataclass
class FoldResult:
    family: str
    fold: int
    mse: float
    smse: float | None = None
    hyperparameters: dict = field(default_factory=dict)
    n_test: int = 0
    inner_score: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "family": self.family,
            "fold": self.fold,
            "mse": self.mse,
            "smse": self.smse,
            "hyperparameters": self.hyperparameters,
            "n_test": self.n_test,
            "inner_score": self.inner_score,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class CvReport:
    folds: list
    aggregate: dict
    p_values: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    config_hash: str = ""
    settings: dict = field(default_factory=dict)
    version: str = __version__

    def families(self):
        present = {f.family for f in self.folds}
        return [f for f in FAMILIES if f in present] + sorted(present - set(FAMILIES))

    def fold_results(self, family):
        return sorted((f for f in self.folds if f.family == family), key=lambda f: f.fold)

    def to_dict(self):
        return {
            "version": self.version,
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "settings": self.settings,
            "folds": [f.to_dict() for f in self.folds],
            "aggregate": self.aggregate,
            "p_values": self.p_values,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            folds=[FoldResult.from_dict(f) for f in d["folds"]],
            aggregate=d["aggregate"],
            p_values=d.get("p_values", []),
            seeds=d.get("seeds", []),
            config_hash=d.get("config_hash", ""),
            settings=d.get("settings", {}),
            version=d.get("version", __version__),
        )


def aggregate_folds(folds) -> dict:
    """Arithmetic mean of fold MSE and SMSE per family (SMSE ``None`` if undefined)."""
    out = {}
    for family in sorted({f.family for f in folds}):
        rows = [f for f in folds if f.family == family]
        smses = [f.smse for f in rows]
        out[family] = {
            "mse": float(np.mean([f.mse for f in rows])),
            "smse": None if any(s is None for s in smses) else float(np.mean(smses)),
            "n_folds": len(rows),
        }
    return out


def assemble_report(folds, p_values=(), seeds=(), config_hash="", settings=None) -> CvReport:
    folds = sorted(folds, key=lambda f: (FAMILIES.index(f.family) if f.family in FAMILIES else len(FAMILIES), f.family, f.fold))
    return CvReport(
        folds=list(folds),
        aggregate=aggregate_folds(folds),
        p_values=list(p_values),
        seeds=list(seeds),
        config_hash=config_hash,
        settings=settings or {},
    )


def report_from_table(values: dict, **kwargs) -> CvReport:
    """Build a report from ``{family: [(mse, smse_or_None), ...]}`` fold values."""
    folds = [
        FoldResult(family, i, float(m), None if s is None else float(s))
        for family, rows in values.items()
        for i, (m, s) in enumerate(rows, start=1)
    ]
    return assemble_report(folds, **kwargs)


def _fmt(value):
    return "n.a." if value is None else f"{value:.2f}"


def render_table(report: CvReport) -> str:
    families = report.families()
    n_folds = max((f.fold for f in report.folds), default=0)
    label_w = max(8, len("Test set"))
    col_w = 10
    group_w = 2 * col_w + 1
    lines = []
    lines.append(" " * label_w + "  " + "  ".join(FAMILY_LABELS.get(f, f).center(group_w) for f in families))
    lines.append(f"{'Test set':<{label_w}}  " + "  ".join(f"{'MSE':>{col_w}} {'SMSE':>{col_w}}" for _ in families))
    rule = "-" * len(lines[-1])
    lines.insert(0, rule)
    lines.append(rule)
    for k in range(1, n_folds + 1):
        cells = []
        for family in families:
            row = next((f for f in report.folds if f.family == family and f.fold == k), None)
            cells.append(f"{_fmt(row and row.mse):>{col_w}} {_fmt(row and row.smse):>{col_w}}")
        lines.append(f"{k:<{label_w}}  " + "  ".join(cells))
    lines.append(rule)
    agg_label = f"1-{n_folds}"
    cells = []
    for family in families:
        agg = report.aggregate.get(family, {})
        cells.append(f"{_fmt(agg.get('mse')):>{col_w}} {_fmt(agg.get('smse')):>{col_w}}")
    lines.append(f"{agg_label:<{label_w}}  " + "  ".join(cells))
    lines.append(rule)
    for test in report.p_values:
        lines.append(
            f"{FAMILY_LABELS.get(test['a'], test['a'])} vs {FAMILY_LABELS.get(test['b'], test['b'])}: "
            f"W = {test['statistic']:.1f}, p = {test['p_value']:.4g}"
        )
    return "\n".join(lines) + "\n"


def to_structured(report: CvReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def from_structured(text: str) -> CvReport:
    return CvReport.from_dict(json.loads(text))


def write_report(report: CvReport, path, format="table"):
    """Write ``report`` as ``table`` or ``structured`` text."""
    if format == "table":
        text = render_table(report)
    elif format == "structured":
        text = to_structured(report)
    else:
        raise ValueError(f"unknown report format {format!r}")
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise OSError(f"cannot write report: directory {parent} does not exist")
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def read_report(path) -> CvReport:
    with open(path) as fh:
        return from_structured(fh.read())
