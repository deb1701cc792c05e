import numpy as np
import pytest

from cbcnn.errors import LengthMismatchError, SingleClassError, TooFewSamplesError
from cbcnn.metrics import CvReport, FoldScore, accuracy, auc, auc_score, kfold, roc, roc_csv
from cbcnn.rng import RngStream


def pair_count_auc(scores, labels):
    """Brute-force Mann-Whitney AUC with ties counted 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestRoc:
    def test_perfect_separation(self):
        curve = roc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0])
        assert auc(curve) == 1.0
        # the curve passes through (0, 1)
        assert any(f == 0.0 and t == 1.0 for f, t in zip(curve.fpr, curve.tpr))

    def test_all_scores_equal(self):
        curve = roc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
        np.testing.assert_array_equal(curve.fpr, [0.0, 1.0])
        np.testing.assert_array_equal(curve.tpr, [0.0, 1.0])
        assert auc(curve) == 0.5

    def test_staircase_from_pair_counting(self):
        scores = [0.9, 0.8, 0.3, 0.1]
        labels = [1, 0, 1, 0]
        assert pair_count_auc(scores, labels) == 0.75
        assert abs(auc_score(scores, labels)) == 0.75

    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=40)
        labels = (rng.random(40) < 0.4).astype(int)
        curve = roc(scores, labels)
        assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
        assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
        assert (np.diff(curve.fpr) >= 0).all()
        assert (np.diff(curve.tpr) >= 0).all()
        assert (np.diff(curve.thresholds) < 0).all()

    def test_errors(self):
        with pytest.raises(SingleClassError):
            roc([0.1, 0.2], [1, 1])
        with pytest.raises(LengthMismatchError):
            roc([0.1, 0.2], [1, 0, 1])


class TestAuc:
    def test_matches_pair_counting_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(10, 200))
            scores = np.round(rng.normal(size=n), 2)  # rounding forces ties
            labels = (rng.random(n) < 0.5).astype(int)
            if labels.min() == labels.max():
                continue
            assert abs(auc_score(scores, labels) - pair_count_auc(scores, labels)) < 1e-12

    def test_antisymmetry(self):
        rng = np.random.default_rng(12)
        scores = rng.normal(size=60)
        labels = (rng.random(60) < 0.5).astype(int)
        a1 = auc_score(scores, labels)
        a2 = auc_score(-scores, labels)
        assert abs(a1 + a2 - 1.0) < 1e-12

    def test_invariant_under_monotone_transforms(self):
        rng = np.random.default_rng(13)
        scores = rng.normal(size=50)
        labels = (rng.random(50) < 0.3).astype(int)
        base = auc_score(scores, labels)
        assert abs(auc_score(np.exp(scores), labels) - base) < 1e-12
        assert abs(auc_score(3.0 * scores + 7.0, labels) - base) < 1e-12


class TestKfold:
    def test_balanced_sizes(self):
        labels = np.array([0, 1] * 5)
        assignment = kfold(labels, 5, RngStream(1))
        sizes = np.bincount(assignment, minlength=5)
        np.testing.assert_array_equal(sizes, [2] * 5)

    def test_eleven_into_five(self):
        labels = np.array([0] * 7 + [1] * 4)
        assignment = kfold(labels, 5, RngStream(2))
        sizes = sorted(np.bincount(assignment, minlength=5), reverse=True)
        assert sizes == [3, 2, 2, 2, 2]

    def test_stratification(self):
        rng = np.random.default_rng(3)
        labels = (rng.random(200) < 0.1).astype(int)
        assignment = kfold(labels, 5, RngStream(3))
        global_frac = labels.mean()
        for fold in range(5):
            in_fold = labels[assignment == fold]
            assert abs(in_fold.mean() - global_frac) <= 1.0 / len(in_fold)

    def test_partition_property(self):
        labels = np.array([0] * 20 + [1] * 5)
        assignment = kfold(labels, 4, RngStream(4))
        assert assignment.shape == (25,)
        assert set(assignment.tolist()) == {0, 1, 2, 3}

    def test_errors(self):
        with pytest.raises(TooFewSamplesError):
            kfold(np.array([0, 1]), 5, RngStream(0))
        with pytest.raises(TooFewSamplesError):
            kfold(np.array([0, 1, 0]), 1, RngStream(0))


class TestAccuracy:
    def test_perfect(self):
        assert accuracy([0.9, 0.9, 0.1], [1, 1, 0]) == 1.0

    def test_inverted(self):
        assert accuracy([0.1, 0.2], [1, 1]) == 0.0

    def test_three_quarters(self):
        assert accuracy([0.9, 0.4, 0.6, 0.1], [1, 0, 0, 0]) == 0.75


def test_roc_csv_header():
    curve = roc([0.9, 0.1], [1, 0])
    text = roc_csv(curve)
    assert text.splitlines()[0] == "threshold,fpr,tpr"


def test_cv_report_text_stable():
    curve = roc([0.9, 0.1], [1, 0])
    folds = [
        FoldScore(0, 0.75, 0.8, curve, np.array([0, 1]), np.array([2, 3])),
        FoldScore(1, 0.85, 0.9, curve, np.array([2, 3]), np.array([0, 1])),
    ]
    report = CvReport(folds, "abc123")
    text = report.to_text()
    assert text == report.to_text()
    assert "config_fingerprint: abc123" in text
    assert report.leakage_overlaps() == [0, 0]
    assert abs(report.mean_auc - 0.8) < 1e-12
