"""Synthetic minority oversampling by convex interpolation between neighbors."""

from dataclasses import dataclass, field

import numpy as np

from .errors import SingleClassError, TooFewSamplesError
from .preprocess import FeatureMatrix
from .rng import ensure_rng
from .validation import check_matrix


@dataclass
class SmoteConfig:
    k: int = 5
    target_ratio: float = 1.0  # desired minority:majority
    standardize: bool = True  # z-score features for the neighbor search
    rng: object = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.target_ratio <= 0:
            raise ValueError("target_ratio must be positive")


@dataclass
class SyntheticBatch:
    X_new: np.ndarray
    base: np.ndarray  # minority-row index each sample interpolates from
    neighbor: np.ndarray  # minority-row index of the chosen neighbor
    delta: np.ndarray


def _standardized(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return (X - mu) / sd


def _neighbor_table(minority, k, standardize):
    """k nearest minority rows for every minority row, ties to lower index."""
    X = _standardized(minority) if standardize else minority
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def k_nearest(minority, i, k, standardize=True):
    """Indices of the k rows closest to row i (Euclidean, self excluded)."""
    X = check_matrix(minority, "minority")
    n = X.shape[0]
    if n <= k:
        raise TooFewSamplesError(f"need more than k={k} rows, have {n}")
    if not 0 <= i < n:
        raise IndexError(f"row {i} out of range")
    return _neighbor_table(X, k, standardize)[i]


def generate(minority, cfg, count):
    """Create `count` synthetic rows on segments between minority neighbors.

    Base rows rotate round-robin so coverage is uniform and the count exact;
    the neighbor is drawn uniformly from the base row's k nearest, and the
    interpolation factor from [0, 1).
    """
    X = check_matrix(minority, "minority")
    n = X.shape[0]
    if n == 0:
        raise TooFewSamplesError("minority class is empty")
    if n <= cfg.k:
        raise TooFewSamplesError(f"need more than k={cfg.k} minority rows, have {n}")
    rng = ensure_rng(cfg.rng)
    neighbors = _neighbor_table(X, cfg.k, cfg.standardize)
    base = np.arange(count, dtype=np.int64) % n
    pick = rng.integers(0, cfg.k, size=count)
    neighbor = neighbors[base, pick]
    delta = rng.random(count)
    X_new = X[base] + (X[neighbor] - X[base]) * delta[:, None]
    return SyntheticBatch(X_new, base, neighbor, delta)


def rebalance(data, cfg):
    """Append synthetic minority rows until minority:majority hits the target.

    Original rows are untouched and stay first.  Returns the augmented
    matrix plus the SyntheticBatch describing each new row's provenance.
    """
    counts = np.bincount(data.y, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise SingleClassError("both classes must be present")
    minority_label = 1 if counts[1] <= counts[0] else 0
    n_min = int(counts[minority_label])
    n_maj = int(counts[1 - minority_label])
    need = int(round(cfg.target_ratio * n_maj)) - n_min
    minority_rows = np.nonzero(data.y == minority_label)[0]
    if need <= 0:
        empty = SyntheticBatch(
            np.empty((0, data.X.shape[1])),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0),
        )
        return FeatureMatrix(data.X.copy(), data.y.copy(), list(data.feature_names)), empty
    batch = generate(data.X[minority_rows], cfg, need)
    X = np.vstack([data.X, batch.X_new])
    y = np.concatenate([data.y, np.full(need, minority_label, dtype=np.int64)])
    # report provenance in the coordinates of the input matrix
    batch = SyntheticBatch(
        batch.X_new,
        minority_rows[batch.base],
        minority_rows[batch.neighbor],
        batch.delta,
    )
    return FeatureMatrix(X, y, list(data.feature_names)), batch
