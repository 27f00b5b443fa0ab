"""Z-score normalisation and PCA projection, fitted on training rows only."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True, eq=False)
class Scaler:
    means: np.ndarray
    stds: np.ndarray

    def to_dict(self):
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["means"], dtype=np.float64), np.asarray(d["stds"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class PcaProjection:
    """Top-``k`` principal axes as orthonormal rows of ``components``.

    ``explained_variance`` uses the population (``1/N``) convention, matching
    the variance of the projected training coordinates.  With ``whiten`` set,
    :func:`transform` also divides each coordinate by its standard deviation.
    """

    components: np.ndarray
    explained_variance: np.ndarray
    center: np.ndarray
    whiten: bool = False

    @property
    def k(self):
        return self.components.shape[0]

    def to_dict(self):
        return {
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "center": self.center.tolist(),
            "whiten": self.whiten,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["components"], dtype=np.float64),
            np.asarray(d["explained_variance"], dtype=np.float64),
            np.asarray(d["center"], dtype=np.float64),
            bool(d.get("whiten", False)),
        )


def fit_scaler(X_train) -> Scaler:
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError(f"need at least two rows to fit a scaler, got shape {X.shape}")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    # constant columns map to zero instead of dividing by zero
    stds = np.where(stds > 0, stds, 1.0)
    return Scaler(means, stds)


def scale(scaler: Scaler, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != scaler.means.shape[0]:
        raise DimensionError(
            f"expected {scaler.means.shape[0]} columns, got shape {X.shape}",
            expected=scaler.means.shape[0],
            actual=X.shape[-1],
        )
    return (X - scaler.means) / scaler.stds


def fit_pca(X_scaled, k: int = 5, whiten: bool = False) -> PcaProjection:
    X = np.asarray(X_scaled, dtype=np.float64)
    n, d = X.shape
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} must lie in [1, min(N-1, D)] = [1, {min(n - 1, d)}]")
    center = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - center, full_matrices=False)
    components = vt[:k].copy()
    # sign convention: largest-magnitude coordinate of each axis is positive
    pivot = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), pivot])
    components *= signs[:, None]
    return PcaProjection(components, s[:k] ** 2 / n, center, whiten)


def project(pca: PcaProjection, X_scaled) -> np.ndarray:
    X = np.asarray(X_scaled, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != pca.center.shape[0]:
        raise DimensionError(
            f"expected {pca.center.shape[0]} columns, got shape {X.shape}",
            expected=pca.center.shape[0],
            actual=X.shape[-1],
        )
    Z = (X - pca.center) @ pca.components.T
    if pca.whiten:
        sd = np.sqrt(pca.explained_variance)
        Z = Z / np.where(sd > 0, sd, 1.0)
    return Z


def transform(scaler: Scaler, pca: PcaProjection, X) -> np.ndarray:
    """Normalise with training statistics, then project onto the principal axes."""
    return project(pca, scale(scaler, X))


@dataclass(frozen=True, eq=False)
class Preprocessor:
    scaler: Scaler
    pca: PcaProjection

    def transform(self, X):
        return transform(self.scaler, self.pca, X)

    def to_dict(self):
        return {"scaler": self.scaler.to_dict(), "pca": self.pca.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(Scaler.from_dict(d["scaler"]), PcaProjection.from_dict(d["pca"]))


def fit_preprocessor(X_train, k: int = 5, whiten: bool = False) -> Preprocessor:
    scaler = fit_scaler(X_train)
    return Preprocessor(scaler, fit_pca(scale(scaler, X_train), k, whiten))
