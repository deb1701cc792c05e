"""Tabular ingestion and cleanup ahead of the learning stages.

Fixed order: drop_sparse_features -> impute_mean -> shift_negatives (per
numeric column) -> rank_categoricals -> finalize.  The result is an
all-numeric, nonnegative, missing-free feature matrix.
"""

import csv
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllColumnsDroppedError,
    AllMissingColumnError,
    MissingLabelColumnError,
    ParseError,
    ResidualCategoricalError,
    ResidualMissingError,
    UnmappableLabelError,
)
from .validation import check_finite, check_labels, check_matrix


@dataclass
class Column:
    name: str
    kind: str  # "numeric" | "categorical"
    values: np.ndarray  # float64 for numeric, object (str) for categorical
    missing: np.ndarray  # bool mask, True = missing


@dataclass
class RawTable:
    columns: list
    labels: np.ndarray

    @property
    def n_rows(self):
        return len(self.labels)

    def column(self, name):
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.X = check_matrix(self.X, "X")
        self.y = check_labels(self.y, self.X.shape[0])


def load_csv(path, label_column, positive_label="1", negative_label="0",
             missing_markers=()):
    """Read a header-first CSV into a RawTable.

    Empty cells (and any extra `missing_markers`) are flagged missing.  A
    column is numeric when every non-missing cell parses as a number,
    categorical otherwise.  Labels must match the positive or negative
    token exactly.
    """
    markers = {""} | set(missing_markers)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} cells, got {len(row)}")
            rows.append(row)
    if label_column not in header:
        raise MissingLabelColumnError(f"no column named {label_column!r}")
    label_idx = header.index(label_column)

    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        tok = row[label_idx].strip()
        if tok == positive_label:
            labels[i] = 1
        elif tok == negative_label:
            labels[i] = 0
        else:
            raise UnmappableLabelError(f"label value {tok!r} at data row {i + 1}")

    columns = []
    for j, name in enumerate(header):
        if j == label_idx:
            continue
        cells = [row[j].strip() for row in rows]
        missing = np.array([c in markers for c in cells], dtype=bool)
        numeric = True
        parsed = np.zeros(len(cells), dtype=np.float64)
        for i, c in enumerate(cells):
            if missing[i]:
                parsed[i] = np.nan
                continue
            try:
                val = float(c)
            except ValueError:
                numeric = False
                break
            if not math.isfinite(val):
                numeric = False
                break
            parsed[i] = val
        if numeric:
            columns.append(Column(name, "numeric", parsed, missing))
        else:
            vals = np.array(["" if m else c for c, m in zip(cells, missing)],
                            dtype=object)
            columns.append(Column(name, "categorical", vals, missing))
    return RawTable(columns, labels)


def drop_sparse_features(table, threshold=0.9):
    """Drop columns whose missing fraction strictly exceeds `threshold`."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    kept = [c for c in table.columns
            if c.missing.mean() <= threshold]
    if not kept:
        raise AllColumnsDroppedError("every column exceeds the missing threshold")
    return RawTable(kept, table.labels)


def impute_mean(table):
    """Fill numeric gaps with the column mean, categorical with the mode."""
    out = []
    for col in table.columns:
        if not col.missing.any():
            out.append(col)
            continue
        observed = ~col.missing
        if not observed.any():
            raise AllMissingColumnError(col.name)
        if col.kind == "numeric":
            fill = float(col.values[observed].mean())
            values = col.values.copy()
            values[col.missing] = fill
        else:
            counts = Counter(col.values[observed])
            # ties: lexicographically first among the most frequent
            top = max(counts.values())
            fill = min(v for v, c in counts.items() if c == top)
            values = col.values.copy()
            values[col.missing] = fill
        out.append(Column(col.name, col.kind, values,
                          np.zeros(len(values), dtype=bool)))
    return RawTable(out, table.labels)


def shift_negatives(v):
    """Move negative entries onto the positive scale.

    With m = min(v), each entry below zero becomes x - m; entries at or
    above zero are untouched.  Idempotent: a second pass sees no negatives.
    """
    a = check_finite(np.asarray(v, dtype=np.float64), "v")
    if a.size == 0:
        return a.copy()
    m = a.min()
    out = a.copy()
    neg = out < 0
    out[neg] = out[neg] + m * (-1.0)
    return out


def rank_categoricals(table):
    """Replace each categorical column by small/medium/large ranks 1/2/3.

    Categories are sorted by frequency (ties lexicographic) and the sorted
    list is split into lower/middle/upper thirds; the most frequent third
    maps to 3.  A lone category is "large".
    """
    out = []
    for col in table.columns:
        if col.kind != "categorical":
            out.append(col)
            continue
        if col.missing.any():
            raise ResidualMissingError(f"column {col.name!r} still has missing cells")
        counts = Counter(col.values)
        cats = sorted(counts, key=lambda c: (counts[c], c))
        n_cats = len(cats)
        rank = {c: math.ceil(3 * (p + 1) / n_cats) for p, c in enumerate(cats)}
        values = np.array([float(rank[c]) for c in col.values], dtype=np.float64)
        out.append(Column(col.name, "numeric", values, col.missing.copy()))
    return RawTable(out, table.labels)


def finalize(table):
    """Assemble an all-numeric table into a FeatureMatrix."""
    for col in table.columns:
        if col.missing.any():
            raise ResidualMissingError(f"column {col.name!r} still has missing cells")
        if col.kind != "numeric":
            raise ResidualCategoricalError(f"column {col.name!r} is categorical")
    X = np.column_stack([c.values for c in table.columns]).astype(np.float64)
    names = [c.name for c in table.columns]
    return FeatureMatrix(X, table.labels, names)


def preprocess_table(table, sparse_threshold=0.9):
    """Run the full cleanup pipeline in its fixed order."""
    t = drop_sparse_features(table, sparse_threshold)
    t = impute_mean(t)
    cols = []
    for col in t.columns:
        if col.kind == "numeric":
            cols.append(Column(col.name, col.kind, shift_negatives(col.values),
                               col.missing.copy()))
        else:
            cols.append(col)
    t = RawTable(cols, t.labels)
    t = rank_categoricals(t)
    return finalize(t)
