import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bnn_severity.errors import DimensionError
from bnn_severity.preprocess import (
    Preprocessor,
    fit_pca,
    fit_preprocessor,
    fit_scaler,
    project,
    scale,
    transform,
)


def eig_projection(X_train_scaled, X_scaled, k):
    """Independent PCA via eigendecomposition of the population covariance."""
    center = X_train_scaled.mean(axis=0)
    C = (X_train_scaled - center).T @ (X_train_scaled - center) / X_train_scaled.shape[0]
    vals, vecs = np.linalg.eigh(C)
    order = np.argsort(vals)[::-1][:k]
    return (X_scaled - center) @ vecs[:, order], vals[order]


class TestScaler:
    def test_constant_column(self):
        s = fit_scaler(np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 5.0]]))
        assert s.means[0] == 3.0 and s.stds[0] == 1.0
        assert np.all(scale(s, np.array([[3.0, 0.0]]))[:, 0] == 0.0)

    def test_two_point_column(self):
        s = fit_scaler(np.array([[0.0], [2.0]]))
        assert s.means[0] == 1.0 and s.stds[0] == 1.0

    def test_moments_after_scaling(self, rng):
        X = rng.normal(3.0, 5.0, size=(10, 3))
        Z = scale(fit_scaler(X), X)
        assert np.all(np.abs(Z.mean(axis=0)) < 1e-12)
        assert np.all(np.abs(Z.std(axis=0) - 1) < 1e-12)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            fit_scaler(np.zeros((1, 3)))

    def test_column_mismatch(self, rng):
        with pytest.raises(DimensionError):
            scale(fit_scaler(rng.normal(size=(5, 3))), np.zeros((2, 4)))


class TestPca:
    def test_axis_aligned(self, rng):
        n = 20000
        X = rng.normal(size=(n, 3)) * np.array([2.0, 1.0, 0.0])
        pca = fit_pca(X, 2)
        np.testing.assert_allclose(np.abs(pca.components[0]), [1, 0, 0], atol=2e-2)
        np.testing.assert_allclose(pca.explained_variance, [4.0, 1.0], rtol=5e-2)

    def test_full_basis_reconstructs(self, rng):
        X = rng.normal(size=(12, 4))
        pca = fit_pca(X, 4)
        back = project(pca, X) @ pca.components + pca.center
        np.testing.assert_allclose(back, X, atol=1e-8)

    def test_duplicated_rows(self, rng):
        X = rng.normal(size=(8, 5))
        X[3] = X[6]
        Z = project(fit_pca(X, 3), X)
        assert np.array_equal(Z[3], Z[6])

    def test_orthonormal_and_sorted(self, rng):
        X = rng.normal(size=(30, 10)) @ rng.normal(size=(10, 10))
        pca = fit_pca(X, 5)
        np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(5), atol=1e-10)
        assert np.all(np.diff(pca.explained_variance) <= 0)

    def test_explained_variance_matches_projection(self, rng):
        X = rng.normal(size=(40, 8)) @ rng.normal(size=(8, 8))
        pca = fit_pca(X, 5)
        np.testing.assert_allclose(project(pca, X).var(axis=0), pca.explained_variance, atol=1e-8)

    def test_sign_convention(self, rng):
        pca = fit_pca(rng.normal(size=(20, 6)), 4)
        pivots = pca.components[np.arange(4), np.argmax(np.abs(pca.components), axis=1)]
        assert np.all(pivots > 0)

    def test_k_too_large(self, rng):
        with pytest.raises(ValueError):
            fit_pca(rng.normal(size=(5, 10)), 5)

    def test_whitening(self, rng):
        X = rng.normal(size=(50, 6)) @ rng.normal(size=(6, 6))
        pca = fit_pca(X, 3, whiten=True)
        np.testing.assert_allclose(project(pca, X).var(axis=0), 1.0, atol=1e-10)


class TestTransform:
    def test_training_projection_centred(self, rng):
        X = rng.normal(4.0, 2.0, size=(25, 9))
        pre = fit_preprocessor(X, 5)
        assert np.all(np.abs(pre.transform(X).mean(axis=0)) < 1e-10)

    def test_mean_row_maps_to_origin(self, rng):
        X = rng.normal(size=(25, 9))
        pre = fit_preprocessor(X, 5)
        assert np.all(np.abs(pre.transform(X.mean(axis=0)[None, :])) < 1e-12)

    def test_matches_eigendecomposition_oracle(self, rng):
        X = rng.normal(size=(60, 12)) @ rng.normal(size=(12, 12)) + rng.normal(size=12)
        idx = rng.permutation(60)
        tr, te = idx[:45], idx[45:]
        scaler = fit_scaler(X[tr])
        pca = fit_pca(scale(scaler, X[tr]), 5)
        ours = transform(scaler, pca, X[te])
        oracle, vals = eig_projection(scale(scaler, X[tr]), scale(scaler, X[te]), 5)
        np.testing.assert_allclose(pca.explained_variance, vals, rtol=1e-8)
        for j in range(5):
            sign = np.sign(ours[0, j] * oracle[0, j])
            np.testing.assert_allclose(ours[:, j], sign * oracle[:, j], atol=1e-8)

    def test_no_leakage_from_test_rows(self, rng):
        X = rng.normal(size=(40, 7))
        tr = np.arange(30)
        before = fit_preprocessor(X[tr], 3)
        X2 = X.copy()
        X2[30:] = rng.normal(100.0, 50.0, size=(10, 7))
        after = fit_preprocessor(X2[tr], 3)
        assert np.array_equal(before.scaler.means, after.scaler.means)
        assert np.array_equal(before.pca.components, after.pca.components)

    def test_serialisation_round_trip(self, rng):
        X = rng.normal(size=(20, 6))
        pre = fit_preprocessor(X, 3, whiten=True)
        again = Preprocessor.from_dict(pre.to_dict())
        assert np.array_equal(again.transform(X), pre.transform(X))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(6, 20), st.integers(2, 6)),
                  elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)))
    def test_components_orthonormal(self, X):
        k = min(X.shape[0] - 1, X.shape[1])
        pca = fit_pca(scale(fit_scaler(X), X), k)
        np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(k), atol=1e-10)
        assert np.all(np.diff(pca.explained_variance) <= 1e-9)
