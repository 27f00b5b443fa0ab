"""CSV ingestion and the synthetic cohort generator.

CSV layout: a header row ``id,target,f0001,...,fD`` followed by one row per
patient.  The id column is carried along but never used for modelling.
"""

from __future__ import annotations

import csv
import os
import re
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError
from .network import DesignMatrix

_DECIMAL = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")
_NON_FINITE = re.compile(r"[+-]?(nan|inf|infinity)", re.IGNORECASE)


def _parse_cell(text, row, column):
    cell = text.strip()
    if _DECIMAL.fullmatch(cell):
        return float(cell)
    if _NON_FINITE.fullmatch(cell):
        raise DataError(f"non-finite value {text!r} at row {row}, column {column}", "non_finite", row, column)
    raise DataError(f"non-numeric value {text!r} at row {row}, column {column}", "non_numeric", row, column)


def load_csv(path, return_ids=False):
    """Read a cohort file into a :class:`DesignMatrix`.

    Rows and columns in error messages are 1-based file coordinates (the
    header is row 1).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path} is empty", "empty")
    header = rows[0]
    if len(header) < 3 or any(_DECIMAL.fullmatch(h.strip()) for h in header):
        raise DataError(f"{path} has no header row (expected id,target,features...)", "missing_header", 1)
    if len(rows) == 1:
        raise DataError(f"{path} has a header but no data rows", "empty")
    width = len(header)
    ids, values = [], []
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != width:
            raise DataError(f"row {i} has {len(r)} cells, header has {width}", "ragged", i)
        ids.append(r[0].strip())
        values.append([_parse_cell(cell, i, j) for j, cell in enumerate(r[1:], start=2)])
    arr = np.asarray(values, dtype=np.float64)
    data = DesignMatrix(arr[:, 1:], arr[:, 0])
    return (data, ids) if return_ids else data


def feature_names(d):
    return [f"f{j:04d}" for j in range(1, d + 1)]


def write_csv(path, data: DesignMatrix, ids=None):
    if ids is None:
        ids = [f"p{i:04d}" for i in range(1, len(data) + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "target", *feature_names(data.n_features)])
        for pid, y, row in zip(ids, data.y, data.X):
            w.writerow([pid, repr(float(y)), *(repr(float(v)) for v in row)])


@dataclass(frozen=True)
class CohortSpec:
    """Synthetic stand-in for the clinical cohort.

    Defaults mirror the summary statistics of the real study: 188 patients,
    820 features, MMSE mean 22.84 (SD 3.70).
    """

    n_patients: int = 188
    n_features: int = 820
    target_mean: float = 22.84
    target_sd: float = 3.70
    latent_dim: int = 5
    noise_sd: float = 0.5
    feature_noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 2 or self.n_features < 1 or self.latent_dim < 1:
            raise ValueError("n_patients >= 2, n_features >= 1 and latent_dim >= 1 required")
        if self.latent_dim > self.n_features:
            raise ValueError("latent_dim cannot exceed n_features")
        if self.target_sd <= 0 or self.noise_sd < 0 or self.feature_noise_sd < 0:
            raise ValueError("standard deviations must be non-negative (target_sd positive)")

    def to_dict(self):
        return asdict(self)


def generate_cohort(spec: CohortSpec = CohortSpec(), return_latent=False):
    """Draw a synthetic cohort with a planted low-dimensional signal.

    Features are a random linear image of ``latent_dim`` standard-normal
    factors plus isotropic noise.  The target is a random affine function of
    the same factors plus noise, standardised to ``target_mean``/``target_sd``
    over the sample and clipped to the MMSE range [0, 30].
    """
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.n_patients, spec.latent_dim))
    loadings = rng.standard_normal((spec.latent_dim, spec.n_features))
    X = z @ loadings + spec.feature_noise_sd * rng.standard_normal((spec.n_patients, spec.n_features))
    beta = rng.standard_normal(spec.latent_dim)
    beta /= np.linalg.norm(beta)
    raw = z @ beta + spec.noise_sd * rng.standard_normal(spec.n_patients)
    sd = raw.std()
    raw = (raw - raw.mean()) / (sd if sd > 0 else 1.0)
    y = np.clip(spec.target_mean + spec.target_sd * raw, 0.0, 30.0)
    data = DesignMatrix(X, y)
    return (data, z) if return_latent else data


def ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
