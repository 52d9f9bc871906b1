import numpy as np
import pytest

from foaa.errors import ContractError
from foaa.metrics import (
    MetricsReport,
    auc_binary,
    auc_macro_ovr,
    auc_pair_count,
    compute_report,
    confusion_matrix,
    roc_points,
)


class TestAuc:
    def test_worked_example(self):
        # 3 of 4 positive/negative pairs correctly ordered
        auc = auc_binary([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert auc == 0.75
        assert auc_pair_count([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_rank_equals_pair_counting(self, rng):
        for _ in range(100):
            n = int(rng.integers(4, 40))
            scores = np.round(rng.standard_normal(n), 1)  # rounding forces ties
            labels = rng.integers(0, 2, n)
            a = auc_binary(scores, labels)
            b = auc_pair_count(scores, labels)
            if a is None:
                assert b is None
            else:
                assert abs(a - b) <= 1e-12

    def test_ties_count_half(self):
        assert auc_binary([0.5, 0.5], [0, 1]) == 0.5

    def test_monotone_transform_invariance(self, rng):
        scores = rng.standard_normal(60)
        labels = rng.integers(0, 2, 60)
        base = auc_binary(scores, labels)
        for transform in (lambda s: 3 * s + 2, np.tanh, lambda s: np.exp(s / 4)):
            assert abs(auc_binary(transform(scores), labels) - base) <= 1e-12

    def test_single_class_undefined(self):
        assert auc_binary([0.1, 0.9], [1, 1]) is None

    def test_perfect_predictor(self):
        assert auc_binary([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


class TestConfusionMatrix:
    def test_row_sums_are_class_counts(self, rng):
        y_true = rng.integers(0, 3, 200)
        y_pred = rng.integers(0, 3, 200)
        cm = confusion_matrix(y_true, y_pred, 3)
        np.testing.assert_array_equal(cm.sum(axis=1), np.bincount(y_true, minlength=3))
        assert cm.sum() == 200

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            confusion_matrix([0, 3], [0, 1], 2)


class TestReport:
    def test_perfect_predictor_all_ones(self):
        labels = np.array([0, 1, 0, 1])
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3], [0.1, 0.9]])
        rep = compute_report(labels, probs)
        assert rep.auc == 1.0
        assert rep.accuracy == 1.0
        assert rep.sensitivity == 1.0
        assert rep.specificity == 1.0
        assert rep.f1_micro == 1.0
        assert rep.f1_macro == 1.0

    def test_f1_micro_equals_accuracy_identically(self, rng):
        for _ in range(50):
            n = int(rng.integers(5, 60))
            c = int(rng.integers(2, 5))
            labels = rng.integers(0, c, n)
            probs = rng.random((n, c))
            probs /= probs.sum(axis=1, keepdims=True)
            rep = compute_report(labels, probs)
            assert rep.f1_micro == rep.accuracy  # exact, not approximate

    def test_confusion_sums_to_test_size(self, rng):
        labels = rng.integers(0, 2, 37)
        probs = rng.random((37, 2))
        probs /= probs.sum(axis=1, keepdims=True)
        rep = compute_report(labels, probs)
        assert rep.confusion.sum() == 37

    def test_binary_sensitivity_is_class1_recall(self):
        labels = np.array([1, 1, 1, 0])
        probs = np.array([[0.4, 0.6], [0.7, 0.3], [0.2, 0.8], [0.9, 0.1]])
        rep = compute_report(labels, probs)
        assert rep.sensitivity == pytest.approx(2 / 3)
        assert rep.specificity == 1.0

    def test_single_class_auc_absent_other_metrics_present(self):
        labels = np.array([1, 1, 1])
        probs = np.array([[0.4, 0.6], [0.7, 0.3], [0.2, 0.8]])
        rep = compute_report(labels, probs)
        assert rep.auc is None
        assert rep.accuracy == pytest.approx(2 / 3)

    def test_multiclass_macro_ovr(self, rng):
        labels = rng.integers(0, 3, 90)
        probs = rng.random((90, 3))
        probs /= probs.sum(axis=1, keepdims=True)
        rep = compute_report(labels, probs)
        manual = np.mean(
            [auc_binary(probs[:, c], (labels == c).astype(int)) for c in range(3)]
        )
        assert rep.auc == pytest.approx(manual, abs=1e-12)
        assert auc_macro_ovr(probs, labels) == pytest.approx(manual, abs=1e-12)

    def test_aggregate_mean_std(self, rng):
        reports = []
        for _ in range(4):
            labels = rng.integers(0, 2, 30)
            probs = rng.random((30, 2))
            probs /= probs.sum(axis=1, keepdims=True)
            reports.append(compute_report(labels, probs))
        agg = MetricsReport.aggregate(reports)
        assert agg.per_fold is not None and len(agg.per_fold) == 4
        accs = [r.accuracy for r in reports]
        assert agg.mean["accuracy"] == pytest.approx(np.mean(accs))
        assert agg.std["accuracy"] == pytest.approx(np.std(accs))


class TestRocPoints:
    def test_endpoints_and_monotonicity(self, rng):
        scores = rng.standard_normal(50)
        labels = rng.integers(0, 2, 50)
        pts = roc_points(scores, labels)
        assert pts[0] == (0.0, 0.0)
        assert pts[-1] == (1.0, 1.0)
        fprs = [p[0] for p in pts]
        tprs = [p[1] for p in pts]
        assert fprs == sorted(fprs)
        assert tprs == sorted(tprs)
