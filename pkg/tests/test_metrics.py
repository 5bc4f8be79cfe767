"""Confusion/PRF, AUC, precision@k, and neighbor-overlap analysis."""

import numpy as np
import numpy.testing as npt
import pytest

from hlan import metrics as mx
from hlan.embeddings import EmbeddingTable


def naive_prf(preds, truths):
    """Loop-based micro/macro precision, recall, F1. No vectorization."""
    docs, num_labels = len(preds), len(preds[0])
    tp = [0] * num_labels
    fp = [0] * num_labels
    fn = [0] * num_labels
    for d in range(docs):
        for l in range(num_labels):
            p, y = bool(preds[d][l]), bool(truths[d][l])
            if p and y:
                tp[l] += 1
            elif p and not y:
                fp[l] += 1
            elif y and not p:
                fn[l] += 1

    def div(a, b):
        return a / b if b else 0.0

    def f1(p, r):
        return div(2 * p * r, p + r)

    per_p = [div(tp[l], tp[l] + fp[l]) for l in range(num_labels)]
    per_r = [div(tp[l], tp[l] + fn[l]) for l in range(num_labels)]
    micro_p = div(sum(tp), sum(tp) + sum(fp))
    micro_r = div(sum(tp), sum(tp) + sum(fn))
    return {
        "micro_p": micro_p,
        "micro_r": micro_r,
        "micro_f1": f1(micro_p, micro_r),
        "macro_p": sum(per_p) / num_labels,
        "macro_r": sum(per_r) / num_labels,
        "macro_f1": sum(f1(p, r) for p, r in zip(per_p, per_r)) / num_labels,
    }


def trapezoid_auc(scores, truths):
    """ROC area by explicit curve construction and trapezoidal integration."""
    scores = np.asarray(scores, dtype=float)
    truths = np.asarray(truths, dtype=bool)
    thresholds = np.concatenate([[np.inf], np.unique(scores)[::-1]])
    tpr = []
    fpr = []
    n_pos = truths.sum()
    n_neg = (~truths).sum()
    for th in thresholds:
        called = scores >= th
        tpr.append((called & truths).sum() / n_pos)
        fpr.append((called & ~truths).sum() / n_neg)
    return float(np.trapezoid(tpr, fpr))


def naive_p_at_k(scores, truths, k):
    total = 0.0
    for s, y in zip(scores, truths):
        order = sorted(range(len(s)), key=lambda j: (-s[j], j))
        total += sum(1 for j in order[:k] if y[j]) / k
    return total / len(scores)


def hand_case():
    # two docs, three labels: pred {1,2}/{3}, truth {1}/{2,3} (1-indexed)
    preds = np.array([[1, 1, 0], [0, 0, 1]])
    truths = np.array([[1, 0, 0], [0, 1, 1]])
    return preds, truths


class TestConfusion:
    def test_perfect_predictions(self):
        y = np.array([[1, 0], [0, 1], [1, 1]])
        c = mx.confusion(y, y)
        npt.assert_array_equal(c.fp, 0)
        npt.assert_array_equal(c.fn, 0)
        npt.assert_array_equal(c.tp, [2, 2])

    def test_hand_case_totals(self):
        c = mx.confusion(*hand_case())
        assert c.tp.sum() == 2 and c.fp.sum() == 1 and c.fn.sum() == 1

    def test_counts_partition_documents(self):
        rng = np.random.default_rng(0)
        preds = rng.integers(0, 2, size=(17, 5))
        truths = rng.integers(0, 2, size=(17, 5))
        c = mx.confusion(preds, truths)
        npt.assert_array_equal(c.tp + c.fp + c.fn + c.tn, 17)

    def test_empty_predictions(self):
        truths = np.array([[1, 0, 1], [1, 1, 0]])
        c = mx.confusion(np.zeros_like(truths), truths)
        npt.assert_array_equal(c.tp, 0)
        npt.assert_array_equal(c.fp, 0)
        npt.assert_array_equal(c.fn, truths.sum(axis=0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(mx.MetricsError):
            mx.confusion(np.zeros((2, 3)), np.zeros((2, 4)))


class TestMicroMacro:
    def test_hand_case(self):
        r = mx.micro_macro(mx.confusion(*hand_case()))
        assert r.micro_p == pytest.approx(2 / 3)
        assert r.micro_r == pytest.approx(2 / 3)
        assert r.micro_f1 == pytest.approx(2 / 3)
        assert r.macro_p == pytest.approx(2 / 3)

    def test_perfect(self):
        y = np.array([[1, 0, 1], [0, 1, 1]])
        r = mx.micro_macro(mx.confusion(y, y))
        for v in (r.micro_p, r.micro_r, r.micro_f1, r.macro_r):
            assert v == 1.0
        # a label with no positives and no predictions scores 0, not NaN
        y2 = np.array([[1, 0], [1, 0]])
        r2 = mx.micro_macro(mx.confusion(y2, y2))
        assert r2.per_label_p[1] == 0.0 and np.isfinite(r2.macro_f1)

    def test_matches_naive_oracle_random(self):
        rng = np.random.default_rng(1)
        for _ in range(150):
            docs = int(rng.integers(1, 50))
            num_labels = int(rng.integers(1, 10))
            preds = rng.integers(0, 2, size=(docs, num_labels))
            truths = rng.integers(0, 2, size=(docs, num_labels))
            got = mx.micro_macro(mx.confusion(preds, truths))
            want = naive_prf(preds.tolist(), truths.tolist())
            assert got.micro_p == want["micro_p"]
            assert got.micro_r == want["micro_r"]
            assert got.micro_f1 == pytest.approx(want["micro_f1"], abs=1e-12)
            assert got.macro_p == pytest.approx(want["macro_p"], abs=1e-12)
            assert got.macro_r == pytest.approx(want["macro_r"], abs=1e-12)
            assert got.macro_f1 == pytest.approx(want["macro_f1"], abs=1e-12)

    def test_micro_f1_invariant_under_label_permutation(self):
        rng = np.random.default_rng(2)
        preds = rng.integers(0, 2, size=(30, 6))
        truths = rng.integers(0, 2, size=(30, 6))
        perm = rng.permutation(6)
        a = mx.micro_macro(mx.confusion(preds, truths))
        b = mx.micro_macro(mx.confusion(preds[:, perm], truths[:, perm]))
        assert a.micro_f1 == b.micro_f1
        assert a.macro_f1 == pytest.approx(b.macro_f1, abs=1e-15)


class TestAuc:
    def test_perfect_ranking(self):
        r = mx.auc(np.array([[0.9], [0.2]]), np.array([[1], [0]]), "micro")
        assert r.value == 1.0

    def test_all_ties_half(self):
        scores = np.full((6, 1), 0.3)
        truths = np.array([[1], [0], [1], [0], [0], [1]])
        assert mx.auc(scores, truths, "micro").value == 0.5

    def test_matches_trapezoid_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            scores = np.round(rng.random((20, 5)), 2)  # rounding forces ties
            truths = rng.integers(0, 2, size=(20, 5))
            if truths.sum() in (0, truths.size):
                continue
            got = mx.auc(scores, truths, "micro").value
            want = trapezoid_auc(scores.ravel(), truths.ravel())
            assert got == pytest.approx(want, abs=1e-9)

    def test_macro_skips_single_class_labels(self):
        scores = np.array([[0.9, 0.4], [0.1, 0.6], [0.5, 0.5]])
        truths = np.array([[1, 1], [0, 1], [1, 1]])  # label 1 all-positive
        r = mx.auc(scores, truths, "macro")
        assert r.skipped_labels == [1]
        assert r.value == mx.auc(scores[:, :1], truths[:, :1], "micro").value

    def test_single_class_pool_rejected(self):
        with pytest.raises(mx.MetricsError):
            mx.auc(np.array([[0.5], [0.6]]), np.array([[1], [1]]), "micro")
        with pytest.raises(mx.MetricsError):
            mx.auc(np.array([[0.5], [0.6]]), np.array([[1], [1]]), "macro")


class TestPrecisionAtK:
    def test_top1_hit(self):
        scores = np.array([[0.9, 0.1, 0.3]])
        truths = np.array([[1, 0, 0]])
        assert mx.precision_at_k(scores, truths, 1) == 1.0

    def test_empty_truth_scores_zero(self):
        scores = np.random.default_rng(4).random((3, 6))
        truths = np.zeros((3, 6))
        assert mx.precision_at_k(scores, truths, 5) == 0.0

    def test_k_equals_label_count_gives_density(self):
        rng = np.random.default_rng(5)
        scores = rng.random((40, 7))
        truths = rng.integers(0, 2, size=(40, 7))
        got = mx.precision_at_k(scores, truths, 7)
        assert got == pytest.approx(truths.sum(axis=1).mean() / 7, abs=1e-12)

    def test_tie_break_prefers_lower_index(self):
        scores = np.array([[0.5, 0.5, 0.5]])
        truths = np.array([[0, 1, 0]])
        assert mx.precision_at_k(scores, truths, 1) == 0.0  # index 0 wins the tie
        truths2 = np.array([[1, 0, 0]])
        assert mx.precision_at_k(scores, truths2, 1) == 1.0

    def test_matches_naive_oracle_random(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            docs = int(rng.integers(1, 30))
            num_labels = int(rng.integers(2, 10))
            scores = np.round(rng.random((docs, num_labels)), 1)
            truths = rng.integers(0, 2, size=(docs, num_labels))
            k = int(rng.integers(1, num_labels + 1))
            got = mx.precision_at_k(scores, truths, k)
            assert got == pytest.approx(naive_p_at_k(scores, truths, k), abs=1e-12)

    def test_nonincreasing_in_k_once_truth_captured(self):
        # past the k where every true label is already in the top-k, the
        # value is |truth|/k and can only decay; below that point it may
        # rise as stragglers enter, so only the captured regime is lawful
        rng = np.random.default_rng(7)
        for _ in range(50):
            num_labels = 8
            scores = rng.random((1, num_labels))
            truth_size = int(rng.integers(1, 4))
            truths = np.zeros((1, num_labels), dtype=int)
            truths[0, rng.choice(num_labels, size=truth_size, replace=False)] = 1
            order = sorted(range(num_labels), key=lambda j: (-scores[0][j], j))
            captured_at = max(order.index(j) for j in np.flatnonzero(truths[0])) + 1
            values = [
                mx.precision_at_k(scores, truths, k)
                for k in range(captured_at, num_labels + 1)
            ]
            assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_k_out_of_range_rejected(self):
        with pytest.raises(mx.MetricsError):
            mx.precision_at_k(np.zeros((1, 3)), np.zeros((1, 3)), 4)


class TestJaccardLeAnalysis:
    def table_from(self, labels, matrix):
        return EmbeddingTable(labels, np.asarray(matrix, dtype=float))

    def test_identical_spaces_give_one(self):
        rng = np.random.default_rng(8)
        labels = [f"l{i}" for i in range(12)]
        m = rng.normal(size=(12, 6))
        r = mx.jaccard_le_analysis(m, self.table_from(labels, m), labels, k=3)
        assert r.mean_jaccard == 1.0
        assert r.std_jaccard == 0.0
        assert r.missing_labels == []

    def test_known_partial_overlap_is_one_third(self):
        # angles chosen so label 0's top-2 sets are {1,2} vs {2,3}
        def ray(deg):
            rad = np.deg2rad(deg)
            return [np.cos(rad), np.sin(rad)]

        labels = ["l0", "l1", "l2", "l3"]
        layer = np.array([ray(0), ray(25), ray(35), ray(85)])
        table = self.table_from(labels, [ray(0), ray(85), ray(25), ray(35)])
        r = mx.jaccard_le_analysis(layer, table, labels, k=2)
        assert r.per_label["l0"] == pytest.approx(1 / 3)

    def test_missing_labels_excluded_and_reported(self):
        rng = np.random.default_rng(9)
        labels = [f"l{i}" for i in range(8)]
        layer = rng.normal(size=(8, 5))
        table = self.table_from(labels[:6], rng.normal(size=(6, 5)))
        r = mx.jaccard_le_analysis(layer, table, labels, k=2)
        assert r.missing_labels == ["l6", "l7"]
        assert set(r.per_label) == set(labels[:6])

    def test_random_layer_matches_monte_carlo_null(self):
        labels = [f"l{i}" for i in range(20)]
        k = 4

        def one(seed):
            rng = np.random.default_rng(seed)
            layer = rng.normal(size=(20, 12))
            table = self.table_from(labels, rng.normal(size=(20, 12)))
            return mx.jaccard_le_analysis(layer, table, labels, k=k).mean_jaccard

        null = np.array([one(1000 + s) for s in range(20)])
        probe = np.array([one(s) for s in range(10)]).mean()
        assert abs(probe - null.mean()) <= 3 * null.std() + 1e-9

    def test_k_bounds(self):
        labels = ["a", "b", "c"]
        m = np.eye(3)
        with pytest.raises(mx.MetricsError):
            mx.jaccard_le_analysis(m, self.table_from(labels, m), labels, k=3)


class TestEvaluateScores:
    def test_threshold_is_strict(self):
        scores = np.array([[0.5, 0.6], [0.7, 0.2]])
        truths = np.array([[1, 1], [0, 0]])
        report = mx.evaluate_scores(scores, truths, threshold=0.5, ks=[1])
        # 0.5 is not > 0.5: label 0 of doc 0 stays unpredicted
        assert report.prf.micro_r == pytest.approx(0.5)

    def test_p_at_k_consistent_with_direct_call(self):
        rng = np.random.default_rng(10)
        scores = rng.random((25, 6))
        truths = rng.integers(0, 2, size=(25, 6))
        report = mx.evaluate_scores(scores, truths, 0.5, ks=[1, 5])
        assert report.precision_at_k[5] == mx.precision_at_k(scores, truths, 5)

    def test_report_format_round_trips_values(self):
        rng = np.random.default_rng(11)
        scores = rng.random((20, 4))
        truths = rng.integers(0, 2, size=(20, 4))
        report = mx.evaluate_scores(scores, truths, 0.5, ks=[2])
        text = mx.format_report(report, labels=["a", "b", "c", "d"])
        lines = dict(
            line.split("\t")[:2] for line in text.splitlines() if "\t" in line
        )
        assert float(lines["micro_f1"]) == pytest.approx(report.prf.micro_f1, abs=1e-6)
        assert float(lines["precision_at_2"]) == pytest.approx(
            report.precision_at_k[2], abs=1e-6
        )
        assert "label" in lines  # per-label table header present
