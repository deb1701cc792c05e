"""ROC/AUC scoring, stratified k-fold splits, and the cross-validation report."""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError, SingleClassError, TooFewSamplesError
from .rng import ensure_rng
from .validation import check_labels, check_vector


@dataclass
class RocCurve:
    """Operating points swept from the highest threshold down.

    `thresholds[0]` is a sentinel above every score, so the curve starts at
    (0, 0); the last threshold is the minimum score, closing it at (1, 1).
    Tied scores collapse into a single threshold.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray


def roc(scores, labels):
    s = check_vector(scores, "scores")
    y = check_labels(labels)
    if s.shape[0] != y.shape[0]:
        raise LengthMismatchError(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    n_pos = int(y.sum())
    n_neg = int(y.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC needs both classes")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # threshold group boundaries: last index of each distinct score
    distinct = np.nonzero(np.diff(s_sorted))[0]
    last = np.concatenate([distinct, [s_sorted.shape[0] - 1]])
    tp = np.cumsum(y_sorted)[last]
    fp = (last + 1) - tp
    thresholds = np.concatenate([[np.inf], s_sorted[last]])
    fpr = np.concatenate([[0.0], fp / n_neg])
    tpr = np.concatenate([[0.0], tp / n_pos])
    return RocCurve(thresholds, fpr, tpr)


def auc(curve):
    """Trapezoidal area under a RocCurve; equals Mann-Whitney with ties at 1/2."""
    x = curve.fpr
    y = curve.tpr
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])) / 2.0)


def auc_score(scores, labels):
    return auc(roc(scores, labels))


def accuracy(scores, labels, threshold=0.5):
    """Fraction of correct calls predicting positive at score >= threshold."""
    s = check_vector(scores, "scores")
    y = check_labels(labels)
    if s.shape[0] != y.shape[0]:
        raise LengthMismatchError(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    pred = (s >= threshold).astype(np.int64)
    return float((pred == y).mean())


def kfold(labels, k, rng):
    """Stratified fold assignment: per class, shuffled indices are dealt
    cyclically, carrying the dealing position across classes so overall fold
    sizes also differ by at most one."""
    y = check_labels(labels)
    n = y.shape[0]
    if k < 2:
        raise TooFewSamplesError("k must be >= 2")
    if n < k:
        raise TooFewSamplesError(f"{n} samples cannot fill {k} folds")
    rng = ensure_rng(rng)
    assignment = np.empty(n, dtype=np.int64)
    pos = 0
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.child(f"class{cls}").permutation(idx.shape[0])]
        for i in idx:
            assignment[i] = pos % k
            pos += 1
    return assignment


def roc_csv(curve):
    lines = ["threshold,fpr,tpr"]
    for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
        lines.append(f"{_fnum(t)},{_fnum(f)},{_fnum(p)}")
    return "\n".join(lines) + "\n"


def _fnum(x):
    x = float(x)
    if np.isinf(x):
        return "inf"
    return repr(x)


@dataclass
class FoldScore:
    fold: int
    auc: float
    accuracy: float
    curve: RocCurve
    test_indices: np.ndarray
    fit_indices: np.ndarray  # original rows that fed any fitting stage


@dataclass
class CvReport:
    folds: list = field(default_factory=list)
    config_fingerprint: str = ""

    @property
    def k(self):
        return len(self.folds)

    @property
    def fold_auc(self):
        return [f.auc for f in self.folds]

    @property
    def fold_accuracy(self):
        return [f.accuracy for f in self.folds]

    @property
    def mean_auc(self):
        return float(np.mean(self.fold_auc))

    @property
    def std_auc(self):
        return float(np.std(self.fold_auc, ddof=1)) if self.k > 1 else 0.0

    @property
    def mean_accuracy(self):
        return float(np.mean(self.fold_accuracy))

    @property
    def std_accuracy(self):
        return float(np.std(self.fold_accuracy, ddof=1)) if self.k > 1 else 0.0

    def leakage_overlaps(self):
        """Per fold, how many test rows also fed a fitting stage (want all 0)."""
        return [
            len(set(f.test_indices.tolist()) & set(f.fit_indices.tolist()))
            for f in self.folds
        ]

    def to_text(self):
        lines = [
            "cbcnn cv-report v1",
            f"config_fingerprint: {self.config_fingerprint}",
            f"folds: {self.k}",
        ]
        for f in self.folds:
            lines.append(
                f"fold {f.fold}: auc={_fnum(f.auc)} accuracy={_fnum(f.accuracy)}"
                f" n_test={len(f.test_indices)}"
            )
        lines.append(f"mean_auc: {_fnum(self.mean_auc)} std_auc: {_fnum(self.std_auc)}")
        lines.append(
            f"mean_accuracy: {_fnum(self.mean_accuracy)}"
            f" std_accuracy: {_fnum(self.std_accuracy)}"
        )
        for f in self.folds:
            lines.append(
                f"fold {f.fold} test_indices: "
                + ",".join(str(i) for i in f.test_indices.tolist())
            )
        overlaps = self.leakage_overlaps()
        lines.append("fit_test_overlap: " + ",".join(str(o) for o in overlaps))
        return "\n".join(lines) + "\n"


def fingerprint(text):
    """Stable hex digest of the effective configuration text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
