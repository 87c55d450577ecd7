"""Open-set evaluation metrics.

Known-class samples are the positives unless stated otherwise, and scores
are "higher means known". Conventions, fixed so results compare exactly
across implementations:

* AUROC is the Mann-Whitney statistic with ties worth one half.
* A sample is accepted at threshold ``t`` when ``score >= t``.
* AUPR is the trapezoidal area under the precision-recall points taken at
  every distinct score, anchored at (recall 0, precision 1).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .features import UNKNOWN, UNKNOWN_LABEL

IN = "IN"
OUT = "OUT"


def _scores(values, name) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite scores")
    return arr


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, tied values sharing the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [values.size]])
    ranks = np.empty(values.size)
    # Mean of positions start+1 .. end is (start + end + 1) / 2.
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    return ranks


def auroc(known_scores, unknown_scores) -> float:
    """Probability that a random known sample outscores a random unknown one."""
    known = _scores(known_scores, "known_scores")
    unknown = _scores(unknown_scores, "unknown_scores")
    ranks = _average_ranks(np.concatenate([known, unknown]))
    n_known = known.size
    # Rank sums are multiples of 1/2, exactly representable at these sizes.
    u_stat = math.fsum(ranks[:n_known]) - n_known * (n_known + 1) / 2.0
    return u_stat / (n_known * unknown.size)


def roc_curve(known_scores, unknown_scores):
    """``(fpr, tpr, thresholds)`` over every distinct score, descending thresholds."""
    known = _scores(known_scores, "known_scores")
    unknown = _scores(unknown_scores, "unknown_scores")
    thresholds = np.unique(np.concatenate([known, unknown]))[::-1]
    tp = known.size - np.searchsorted(np.sort(known), thresholds, side="left")
    fp = unknown.size - np.searchsorted(np.sort(unknown), thresholds, side="left")
    tpr = np.concatenate([[0.0], tp / known.size])
    fpr = np.concatenate([[0.0], fp / unknown.size])
    return fpr, tpr, np.concatenate([[np.inf], thresholds])


def threshold_at_tpr(known_scores, target_tpr: float = 0.95) -> float:
    """Largest threshold that accepts at least ``target_tpr`` of the known scores.

    That is the k-th largest known score for the smallest k with
    ``k / N >= target_tpr``.
    """
    if not 0 < target_tpr <= 1:
        raise InvalidInputError(f"target_tpr must lie in (0, 1], got {target_tpr!r}")
    known = np.sort(_scores(known_scores, "known_scores"))[::-1]
    n = known.size
    rates = np.arange(1, n + 1) / n
    k = int(np.argmax(rates >= target_tpr))
    return float(known[k])


def fpr_at_tpr(known_scores, unknown_scores, target_tpr: float = 0.95) -> float:
    """Share of unknown scores accepted at :func:`threshold_at_tpr`."""
    unknown = _scores(unknown_scores, "unknown_scores")
    threshold = threshold_at_tpr(known_scores, target_tpr)
    return int(np.count_nonzero(unknown >= threshold)) / unknown.size


def precision_recall_curve(known_scores, unknown_scores, positives: str = IN):
    """``(precision, recall)`` points, starting at the (1, 0) anchor.

    With ``positives=OUT`` the unknown samples are the positives and all
    scores are negated so a low score ranks first.
    """
    known = _scores(known_scores, "known_scores")
    unknown = _scores(unknown_scores, "unknown_scores")
    if positives == IN:
        pos, neg = known, unknown
    elif positives == OUT:
        pos, neg = -unknown, -known
    else:
        raise InvalidInputError(f"positives must be {IN!r} or {OUT!r}, got {positives!r}")
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tp = pos.size - np.searchsorted(np.sort(pos), thresholds, side="left")
    fp = neg.size - np.searchsorted(np.sort(neg), thresholds, side="left")
    precision = np.concatenate([[1.0], tp / (tp + fp)])
    recall = np.concatenate([[0.0], tp / pos.size])
    return precision, recall


def aupr(known_scores, unknown_scores, positives: str = IN) -> float:
    precision, recall = precision_recall_curve(known_scores, unknown_scores, positives)
    segments = (recall[1:] - recall[:-1]) * (precision[1:] + precision[:-1]) / 2.0
    return math.fsum(segments)


def f1_scores(final_labels: Sequence[int], true_labels: Sequence[int], class_names=None):
    """Per-class F1 over the known classes plus UNKNOWN.

    Returns ``(f1_macro, f1_weighted, per_class_accuracy)``. Classes with no
    true samples are left out of both averages; empty precision or recall
    denominators count as 0. ``per_class_accuracy`` maps class name (or index
    when ``class_names`` is None) to recall, with UNKNOWN under
    ``"__unknown__"``.
    """
    pred = np.asarray(final_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise InvalidInputError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise InvalidInputError("no labels to score")
    labels = np.unique(true)
    f1, support, accuracy = [], [], {}
    for c in labels:
        tp = int(np.count_nonzero((pred == c) & (true == c)))
        n_pred = int(np.count_nonzero(pred == c))
        n_true = int(np.count_nonzero(true == c))
        precision = tp / n_pred if n_pred else 0.0
        recall = tp / n_true
        f1.append(2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0)
        support.append(n_true)
        if c == UNKNOWN:
            key = UNKNOWN_LABEL
        elif class_names is not None:
            key = class_names[c]
        else:
            key = str(int(c))
        accuracy[key] = recall
    f1 = np.array(f1)
    # Dividing out the gcd makes equal supports reduce to unit weights, so the
    # weighted mean then equals the macro mean bit for bit.
    weights = np.array(support) // math.gcd(*support)
    macro = math.fsum(f1) / f1.size
    weighted = math.fsum(f1 * weights) / int(weights.sum())
    return macro, weighted, accuracy


def auroc_difference(auroc_a: float, auroc_b: float) -> float:
    """Absolute gap between two AUROC values (consistency across datasets)."""
    for v in (auroc_a, auroc_b):
        if not (0.0 <= v <= 1.0):
            raise InvalidInputError(f"AUROC must lie in [0, 1], got {v!r}")
    return abs(auroc_a - auroc_b)


@dataclass
class EvalReport:
    scorer_name: str
    auroc: float
    fpr_at_95tpr: float
    aupr_in: float
    aupr_out: float
    f1_macro: float
    f1_weighted: float
    per_class_accuracy: dict = field(default_factory=dict)
    n_known: int = 0
    n_unknown: int = 0
    threshold_used: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalReport":
        return cls(**obj)


def evaluate(scorer_name: str, scores, true_labels, predicted_classes, threshold: float,
             class_names=None) -> EvalReport:
    """All metrics for one scorer. Rows with ``true_label == UNKNOWN`` are the open set."""
    scores = np.asarray(scores, dtype=np.float64)
    true = np.asarray(true_labels, dtype=np.int64)
    pred = np.asarray(predicted_classes, dtype=np.int64)
    if not (scores.shape == true.shape == pred.shape):
        raise InvalidInputError("scores, labels and predictions must have equal length")
    known = scores[true != UNKNOWN]
    unknown = scores[true == UNKNOWN]
    final = np.where(scores >= threshold, pred, UNKNOWN)
    macro, weighted, accuracy = f1_scores(final, true, class_names)
    return EvalReport(
        scorer_name=scorer_name,
        auroc=auroc(known, unknown),
        fpr_at_95tpr=fpr_at_tpr(known, unknown, 0.95),
        aupr_in=aupr(known, unknown, IN),
        aupr_out=aupr(known, unknown, OUT),
        f1_macro=macro,
        f1_weighted=weighted,
        per_class_accuracy=accuracy,
        n_known=int(known.size),
        n_unknown=int(unknown.size),
        threshold_used=float(threshold),
    )


_TABLE_COLUMNS = (
    ("AUROC ↑", "auroc"),
    ("FPR95-TPR ↓", "fpr_at_95tpr"),
    ("AUPR-IN ↑", "aupr_in"),
    ("AUPR-OUT ↑", "aupr_out"),
    ("F1-macro ↑", "f1_macro"),
    ("F1-weighted ↑", "f1_weighted"),
)


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table, metrics in percent with two decimals."""
    header = ["Scorer"] + [title for title, _ in _TABLE_COLUMNS]
    rows = [[r.scorer_name] + [f"{100.0 * getattr(r, key):.2f}" for _, key in _TABLE_COLUMNS]
            for r in reports]
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()

    sep = "-" * len(line(header))
    return "\n".join([line(header), sep] + [line(r) for r in rows]) + "\n"
