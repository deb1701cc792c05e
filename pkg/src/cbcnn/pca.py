"""Maximum-variance linear reduction on the data covariance's eigenbasis."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DimensionMismatchError, TooFewRowsError, TooManyComponentsError
from .linalg import sym_eig
from .validation import check_matrix


class PcaReducer(TransformerMixin, BaseEstimator):
    """Project features onto the top eigenvectors of their covariance.

    The covariance uses the 1/n divisor.  Columns are z-scored before the
    fit by default, since rank-coded categoricals and raw numerics mix
    scales; pass standardize=False for covariance on centered data only.
    n_components is clamped to the feature count at fit time.

    Fitted attributes: scale_mean_, scale_std_, mean_, components_
    (columns = eigenvectors), eigenvalues_ (descending), n_components_.
    """

    def __init__(self, n_components=60, standardize=True):
        self.n_components = n_components
        self.standardize = standardize

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        n, d = X.shape
        if n < 2:
            raise TooFewRowsError("PCA needs at least 2 rows")
        if self.n_components < 1:
            raise TooManyComponentsError("n_components must be >= 1")
        if self.standardize:
            self.scale_mean_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.scale_std_ = np.where(sd == 0.0, 1.0, sd)
            X = (X - self.scale_mean_) / self.scale_std_
        else:
            self.scale_mean_ = np.zeros(d)
            self.scale_std_ = np.ones(d)
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        cov = centered.T @ centered / n
        self.eigenvalues_, self.components_ = sym_eig(cov)
        self.n_components_ = min(self.n_components, d)
        return self

    def transform(self, X, n_components=None):
        if not hasattr(self, "components_"):
            raise NotFittedError("PcaReducer is not fitted")
        X = check_matrix(X, "X")
        d = self.components_.shape[0]
        if X.shape[1] != d:
            raise DimensionMismatchError(f"expected {d} features, got {X.shape[1]}")
        k = self.n_components_ if n_components is None else n_components
        if not 1 <= k <= d:
            raise TooManyComponentsError(f"n_components {k} outside [1, {d}]")
        X = (X - self.scale_mean_) / self.scale_std_
        return (X - self.mean_) @ self.components_[:, :k]

    def inverse_transform(self, Z):
        if not hasattr(self, "components_"):
            raise NotFittedError("PcaReducer is not fitted")
        Z = check_matrix(Z, "Z")
        k = Z.shape[1]
        X = Z @ self.components_[:, :k].T + self.mean_
        return X * self.scale_std_ + self.scale_mean_
