"""Multi-label evaluation: confusion counts, micro/macro P/R/F1, rank-based
AUC, precision@k, and neighbor-overlap analysis between a model layer and a
label embedding table."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embeddings import EmbeddingTable


class MetricsError(ValueError):
    """Invalid metric input."""


@dataclass
class ConfusionCounts:
    """Per-label integer counts; tp+fp+fn+tn equals the document count."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def num_labels(self) -> int:
        return len(self.tp)


def confusion(preds: np.ndarray, truths: np.ndarray) -> ConfusionCounts:
    """Count per-label outcomes from 0/1 prediction and truth matrices."""
    p = np.asarray(preds)
    y = np.asarray(truths)
    if p.shape != y.shape or p.ndim != 2:
        raise MetricsError(f"prediction/truth shapes differ: {p.shape} vs {y.shape}")
    p = p.astype(bool)
    y = y.astype(bool)
    return ConfusionCounts(
        tp=(p & y).sum(axis=0).astype(np.int64),
        fp=(p & ~y).sum(axis=0).astype(np.int64),
        fn=(~p & y).sum(axis=0).astype(np.int64),
        tn=(~p & ~y).sum(axis=0).astype(np.int64),
    )


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def _f1(p, r):
    return _safe_div(2.0 * p * r, p + r)


@dataclass
class PrfReport:
    micro_p: float
    micro_r: float
    micro_f1: float
    macro_p: float
    macro_r: float
    macro_f1: float
    per_label_p: np.ndarray
    per_label_r: np.ndarray
    per_label_f1: np.ndarray


def micro_macro(counts: ConfusionCounts) -> PrfReport:
    """Pooled (micro) and per-label-averaged (macro) precision/recall/F1.

    A per-label precision or recall with a zero denominator counts as 0.
    """
    per_p = _safe_div(counts.tp, counts.tp + counts.fp)
    per_r = _safe_div(counts.tp, counts.tp + counts.fn)
    per_f1 = _f1(per_p, per_r)
    micro_p = float(_safe_div(counts.tp.sum(), counts.tp.sum() + counts.fp.sum()))
    micro_r = float(_safe_div(counts.tp.sum(), counts.tp.sum() + counts.fn.sum()))
    return PrfReport(
        micro_p=micro_p,
        micro_r=micro_r,
        micro_f1=float(_f1(micro_p, micro_r)),
        macro_p=float(per_p.mean()),
        macro_r=float(per_r.mean()),
        macro_f1=float(per_f1.mean()),
        per_label_p=per_p,
        per_label_r=per_r,
        per_label_f1=per_f1,
    )


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank range."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    avg = (bounds[:-1] + bounds[1:] + 1) / 2.0
    return avg[inverse]


def _binary_auc(scores: np.ndarray, truths: np.ndarray) -> float:
    pos = truths.astype(bool)
    n_pos = int(pos.sum())
    n_neg = len(truths) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("AUC undefined: needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class AucResult:
    value: float
    skipped_labels: list = field(default_factory=list)


def auc(scores: np.ndarray, truths: np.ndarray, mode: str = "micro") -> AucResult:
    """Area under the ROC curve via the rank statistic (ties count half).

    micro pools every document-label pair; macro averages per-label AUCs,
    skipping (and reporting) labels that lack a positive or a negative.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truths)
    if s.shape != y.shape or s.ndim != 2:
        raise MetricsError(f"score/truth shapes differ: {s.shape} vs {y.shape}")
    if mode == "micro":
        return AucResult(_binary_auc(s.ravel(), y.ravel()))
    if mode != "macro":
        raise MetricsError(f"unknown AUC mode {mode!r}")
    values = []
    skipped = []
    for label in range(s.shape[1]):
        col = y[:, label].astype(bool)
        if col.all() or not col.any():
            skipped.append(label)
            continue
        values.append(_binary_auc(s[:, label], y[:, label]))
    if not values:
        raise MetricsError("macro AUC undefined: every label lacks a class")
    return AucResult(float(np.mean(values)), skipped)


def _top_k_indices(row: np.ndarray, k: int) -> np.ndarray:
    # ties resolved toward the lower label index
    order = np.lexsort((np.arange(len(row)), -row))
    return order[:k]


def precision_at_k(scores: np.ndarray, truths: np.ndarray, k: int) -> float:
    """Mean over documents of (true labels among the k highest scores)/k."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truths).astype(bool)
    if s.shape != y.shape or s.ndim != 2:
        raise MetricsError(f"score/truth shapes differ: {s.shape} vs {y.shape}")
    if not 1 <= k <= s.shape[1]:
        raise MetricsError(f"k must be in [1, {s.shape[1]}], got {k}")
    hits = np.empty(len(s))
    for d in range(len(s)):
        top = _top_k_indices(s[d], k)
        hits[d] = y[d, top].sum() / k
    return float(hits.mean())


@dataclass
class LeOverlapReport:
    """Top-k neighbor-set agreement between layer rows and an embedding table."""

    mean_jaccard: float
    std_jaccard: float
    per_label: dict
    missing_labels: list


def _cosine_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    if (norms == 0).any():
        raise MetricsError("cosine undefined for a zero row")
    unit = matrix / norms[:, None]
    return unit @ unit.T


def _neighbor_sets(matrix: np.ndarray, k: int) -> list[frozenset]:
    sims = _cosine_rows(matrix)
    out = []
    for i in range(len(matrix)):
        row = sims[i].copy()
        row[i] = -np.inf  # a row is not its own neighbor
        out.append(frozenset(_top_k_indices(row, k)))
    return out


def jaccard_le_analysis(
    layer: np.ndarray,
    table: EmbeddingTable,
    labels: list[str],
    k: int = 10,
) -> LeOverlapReport:
    """Compare each label's top-k cosine neighbors in ``layer`` row space
    against its neighbors in the embedding table.

    Labels absent from the table are excluded from both spaces and
    reported. Jaccard = |intersection| / |union| per label.
    """
    layer = np.asarray(layer, dtype=np.float64)
    if layer.ndim != 2 or layer.shape[0] != len(labels):
        raise MetricsError(
            f"layer must be [num_labels, d], got {layer.shape} for {len(labels)} labels"
        )
    present = [i for i, lab in enumerate(labels) if lab in table]
    missing = [labels[i] for i in range(len(labels)) if i not in set(present)]
    if len(present) < 2:
        raise MetricsError("need at least two labels present in the embedding table")
    if not 1 <= k < len(present):
        raise MetricsError(f"k must be in [1, {len(present) - 1}], got {k}")

    sub_layer = layer[present]
    sub_table = np.stack([table.vector(labels[i]) for i in present])
    layer_sets = _neighbor_sets(sub_layer, k)
    table_sets = _neighbor_sets(sub_table, k)

    per_label = {}
    for pos, i in enumerate(present):
        a, b = layer_sets[pos], table_sets[pos]
        per_label[labels[i]] = len(a & b) / len(a | b)
    values = np.array(list(per_label.values()))
    return LeOverlapReport(
        mean_jaccard=float(values.mean()),
        std_jaccard=float(values.std()),
        per_label=per_label,
        missing_labels=missing,
    )


@dataclass
class MetricsReport:
    """Everything the evaluation report file carries."""

    prf: PrfReport
    micro_auc: float
    macro_auc: float
    auc_skipped_labels: list
    precision_at_k: dict
    label_frequency: np.ndarray
    num_documents: int


def evaluate_scores(
    scores: np.ndarray,
    truths: np.ndarray,
    threshold: float,
    ks: Optional[list[int]] = None,
) -> MetricsReport:
    """Threshold scores, then compute the full metric set in one pass."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truths)
    preds = s > threshold
    prf = micro_macro(confusion(preds, y))
    micro = auc(s, y, "micro")
    macro = auc(s, y, "macro")
    p_at_k = {k: precision_at_k(s, y, k) for k in (ks or [])}
    return MetricsReport(
        prf=prf,
        micro_auc=micro.value,
        macro_auc=macro.value,
        auc_skipped_labels=macro.skipped_labels,
        precision_at_k=p_at_k,
        label_frequency=y.astype(bool).sum(axis=0),
        num_documents=len(y),
    )


def format_report(report: MetricsReport, labels: Optional[list[str]] = None) -> str:
    """Delimited text report: a summary block, then one row per label."""
    lines = ["metric\tvalue"]
    pairs = [
        ("micro_auc", report.micro_auc),
        ("macro_auc", report.macro_auc),
        ("micro_precision", report.prf.micro_p),
        ("micro_recall", report.prf.micro_r),
        ("micro_f1", report.prf.micro_f1),
        ("macro_precision", report.prf.macro_p),
        ("macro_recall", report.prf.macro_r),
        ("macro_f1", report.prf.macro_f1),
    ]
    for k in sorted(report.precision_at_k):
        pairs.append((f"precision_at_{k}", report.precision_at_k[k]))
    pairs.append(("documents", report.num_documents))
    for name, value in pairs:
        if isinstance(value, float):
            lines.append(f"{name}\t{value:.6f}")
        else:
            lines.append(f"{name}\t{value}")
    if report.auc_skipped_labels:
        skipped = ",".join(str(i) for i in report.auc_skipped_labels)
        lines.append(f"macro_auc_skipped_labels\t{skipped}")
    lines.append("")
    lines.append("label\tfrequency\tprecision\trecall\tf1")
    n = len(report.prf.per_label_p)
    names = labels if labels is not None else [str(i) for i in range(n)]
    for i in range(n):
        lines.append(
            f"{names[i]}\t{int(report.label_frequency[i])}"
            f"\t{report.prf.per_label_p[i]:.6f}"
            f"\t{report.prf.per_label_r[i]:.6f}"
            f"\t{report.prf.per_label_f1[i]:.6f}"
        )
    return "\n".join(lines) + "\n"
