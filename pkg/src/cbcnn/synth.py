"""Reproducible synthetic churn-style dataset: two Gaussian classes with a
configurable minority:majority imbalance, a slice of categorical columns,
and injected missing cells."""

import csv

import numpy as np

from .errors import InvalidParamsError
from .rng import ensure_rng

_CAT_EDGES = (-0.4307, 0.4307)  # ~tertiles of a standard normal
_CAT_NAMES = ("a", "b", "c")


def generate_synthetic(cfg, rng=None):
    """Write the dataset described by cfg.synth_* to cfg.data_path.

    Every feature is informative: class 1 (the minority, the churners) is
    shifted by synth_shift times a per-feature factor in [0.5, 1.5).
    Categorical columns discretize their latent value into three letter
    bins, so they stay informative after rank coding.
    """
    if cfg.synth_n < 10:
        raise InvalidParamsError("synth.n must be >= 10")
    if cfg.synth_ratio <= 0:
        raise InvalidParamsError("synth.ratio must be positive")
    if not cfg.data_path:
        raise InvalidParamsError("data.path must point at the file to write")
    rng = ensure_rng(rng if rng is not None else cfg.seed).child("synth")

    n = cfg.synth_n
    d = cfg.synth_features
    n_min = int(round(n / (1.0 + cfg.synth_ratio)))
    n_min = max(1, min(n - 1, n_min))
    n_maj = n - n_min

    shift = cfg.synth_shift * rng.child("shift").uniform_array(0.5, 1.5, d)
    signs = np.where(rng.child("signs").random(d) < 0.5, -1.0, 1.0)
    shift = shift * signs
    x_maj = rng.child("maj").normal((n_maj, d))
    x_min = rng.child("min").normal((n_min, d)) + shift
    X = np.vstack([x_maj, x_min])
    y = np.concatenate([np.zeros(n_maj, dtype=int), np.ones(n_min, dtype=int)])
    order = rng.child("order").permutation(n)
    X, y = X[order], y[order]

    n_cat = int(round(cfg.synth_categorical * d))
    cat_cols = set(range(n_cat))
    miss = rng.child("missing").random((n, d)) < cfg.synth_missing

    header = [f"f{j:02d}" for j in range(d)] + ["label"]
    rows = []
    for i in range(n):
        row = []
        for j in range(d):
            if miss[i, j]:
                row.append("")
            elif j in cat_cols:
                v = X[i, j]
                k = 0 if v < _CAT_EDGES[0] else (1 if v < _CAT_EDGES[1] else 2)
                row.append(_CAT_NAMES[k])
            else:
                row.append(repr(float(X[i, j])))
        row.append(str(int(y[i])))
        rows.append(row)

    with open(cfg.data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return cfg.data_path
