"""Classification metrics with the pilot class as positive.

AUC is the Mann-Whitney statistic computed from average ranks, so ties
count half a win; single-class inputs have no defined AUC and raise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingleClassError(ValueError):
    """AUC needs at least one positive and one negative example."""


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    acc: float
    auc: float | None
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts

    def to_dict(self):
        return {
            "acc": self.acc,
            "auc": self.auc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "tn": self.counts.tn,
            "fn": self.counts.fn,
        }

    def table(self) -> str:
        auc = "n/a" if self.auc is None else f"{self.auc:.4f}"
        lines = [
            f"  acc        {self.acc:.4f}",
            f"  auc        {auc}",
            f"  precision  {self.precision:.4f}",
            f"  recall     {self.recall:.4f}",
            f"  f1         {self.f1:.4f}",
            f"  confusion  tp={self.counts.tp} fp={self.counts.fp} "
            f"tn={self.counts.tn} fn={self.counts.fn}",
        ]
        return "\n".join(lines)


def confusion_counts(scores, labels, threshold=0.5) -> ConfusionCounts:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pred = scores >= threshold
    pos = labels == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def _average_ranks(scores):
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # 1-based average rank
        i = j + 1
    return ranks


def compute_auc(scores, labels) -> float:
    """(wins + 0.5*ties) / (P*N) over all positive-negative score pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC undefined: need both classes present")
    ranks = _average_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def metrics_report(scores, labels, threshold=0.5) -> MetricsReport:
    counts = confusion_counts(scores, labels, threshold)
    if counts.total == 0:
        raise ValueError("no samples to evaluate")
    acc = (counts.tp + counts.tn) / counts.total
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall > 0 else 0.0
    try:
        auc = compute_auc(scores, labels)
    except SingleClassError:
        auc = None
    return MetricsReport(acc=acc, auc=auc, precision=precision,
                         recall=recall, f1=f1, counts=counts)
