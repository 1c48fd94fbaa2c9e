"""Detection-quality metrics: AUROC, AUPRC (both orientations), max-F1.

All metrics treat higher scores as more suspect.  AUROC is the probability
that a random mislabeled sample outranks a random clean one, with ties
credited one half.  The macro AUPRC averages the mislabeled-as-positive
and clean-as-positive areas, since either orientation alone depends on the
base rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _check_inputs(scores, flags) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    z = np.asarray(flags, dtype=bool).ravel()
    if s.shape != z.shape:
        raise ValidationError(f"scores and flags disagree in length: {s.shape} vs {z.shape}")
    if s.size == 0:
        raise ValidationError("empty input")
    if not np.isfinite(s).all():
        raise ValidationError("non-finite score")
    return s, z


def _midranks(s: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the average rank."""
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, flags) -> float:
    """Rank-statistic AUROC in O(n log n); requires both classes present."""
    s, z = _check_inputs(scores, flags)
    n_pos = int(z.sum())
    n_neg = z.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUROC undefined: only one class present")
    ranks = _midranks(s)
    u = ranks[z].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_precision(s: np.ndarray, y: np.ndarray) -> float:
    """Sum of (recall step) * precision over descending distinct thresholds."""
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order].astype(np.float64)
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1.0 - y_sorted)
    # only positions where the threshold changes are real operating points
    last_of_group = np.ones(s.size, dtype=bool)
    last_of_group[:-1] = s_sorted[:-1] != s_sorted[1:]
    tp = tp[last_of_group]
    fp = fp[last_of_group]
    total_pos = tp[-1]
    precision = tp / (tp + fp)
    recall = tp / total_pos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


def auprc(scores, flags, positive_is_mislabel: bool = True) -> float:
    """Area under precision-recall for one orientation of the task."""
    s, z = _check_inputs(scores, flags)
    if z.all() or not z.any():
        raise ValidationError("AUPRC undefined: only one class present")
    if positive_is_mislabel:
        return _average_precision(s, z)
    return _average_precision(-s, ~z)


def best_f1(scores, flags) -> tuple[float, float]:
    """Max F1 over thresholds with rule: predict mislabel iff score >= t.

    Sweeps every distinct score value; returns (f1, smallest threshold
    achieving it).
    """
    s, z = _check_inputs(scores, flags)
    n_pos = int(z.sum())
    if n_pos == 0:
        raise ValidationError("max-F1 undefined: no positives")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    z_sorted = z[order].astype(np.float64)
    tp = np.cumsum(z_sorted)
    predicted = np.arange(1, s.size + 1, dtype=np.float64)
    last_of_group = np.ones(s.size, dtype=bool)
    last_of_group[:-1] = s_sorted[:-1] != s_sorted[1:]
    f1 = 2.0 * tp / (predicted + n_pos)  # = 2TP / (2TP + FP + FN)
    f1 = f1[last_of_group]
    thresholds = s_sorted[last_of_group]
    best = -1.0
    best_t = float("nan")
    for value, t in zip(f1, thresholds):
        if value > best or (value == best and t < best_t):
            best = float(value)
            best_t = float(t)
    return best, best_t


@dataclass(frozen=True)
class MetricsReport:
    auroc: float
    auprc_pos: float
    auprc_neg: float
    auprc_macro: float
    f1_max: float
    f1_threshold: float
    n_pos: int
    n_neg: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def compute_report(scores, flags) -> MetricsReport:
    s, z = _check_inputs(scores, flags)
    pos = auprc(s, z, positive_is_mislabel=True)
    neg = auprc(s, z, positive_is_mislabel=False)
    f1, t = best_f1(s, z)
    return MetricsReport(
        auroc=auroc(s, z),
        auprc_pos=pos,
        auprc_neg=neg,
        auprc_macro=0.5 * (pos + neg),
        f1_max=f1,
        f1_threshold=t,
        n_pos=int(z.sum()),
        n_neg=int(z.size - z.sum()),
    )


__all__ = ["auroc", "auprc", "best_f1", "MetricsReport", "compute_report"]
