"""
Classification metrics: confusion counts, accuracy, F1, MCC, AUC and ROC points.

A case is predicted positive (IDH-mutant) iff its positive-class probability
is >= the threshold.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn.metrics import roc_curve

from src.utils.errors import DataError, DegenerateLabels


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise DataError(f"Confusion counts must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class ScoredSet:
    """Per-case positive-class scores with binary labels."""

    scores: np.ndarray
    labels: np.ndarray
    case_ids: Optional[Sequence[str]] = None

    def __post_init__(self):
        if self.case_ids is not None:
            self.case_ids = [str(c) for c in self.case_ids]
            if len(self.case_ids) != len(self.labels):
                raise DataError("ScoredSet case_ids and labels differ in length")
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        self.labels = np.asarray(self.labels).astype(np.int64).ravel()
        if self.scores.shape != self.labels.shape:
            raise DataError(
                f"{self.scores.size} scores but {self.labels.size} labels in ScoredSet"
            )
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("ScoredSet labels must be 0 or 1")
        if not np.isfinite(self.scores).all():
            raise DataError("ScoredSet scores must be finite")

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(self.labels.size - self.labels.sum())

    def require_both_classes(self, minimum: int = 1) -> None:
        if self.n_pos < minimum or self.n_neg < minimum:
            raise DegenerateLabels(
                f"Need >= {minimum} case(s) per class, got {self.n_pos} positive "
                f"and {self.n_neg} negative"
            )


def confusion_counts(
    scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5
) -> ConfusionCounts:
    scored = ScoredSet(np.asarray(scores), np.asarray(labels))
    predicted = scored.scores >= threshold
    positive = scored.labels == 1
    return ConfusionCounts(
        tp=int(np.sum(predicted & positive)),
        fp=int(np.sum(predicted & ~positive)),
        tn=int(np.sum(~predicted & ~positive)),
        fn=int(np.sum(~predicted & positive)),
    )


def binary_metrics(counts: ConfusionCounts) -> Dict[str, float]:
    """
    Accuracy, F1, MCC plus precision, recall and specificity.

    Args:
        counts: Confusion counts with a positive total

    Returns:
        Dict with acc, f1, mcc, precision, recall, specificity. Empty
        denominators give 0, as does any zero factor of the MCC denominator.
    """
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    if counts.total <= 0:
        raise DataError("binary_metrics needs at least one case")

    f1_den = 2 * tp + fp + fn
    factors = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return {
        "acc": (tp + tn) / counts.total,
        "f1": 2 * tp / f1_den if f1_den else 0.0,
        "mcc": (tp * tn - fp * fn) / math.sqrt(factors) if factors else 0.0,
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
        "specificity": tn / (tn + fp) if tn + fp else 0.0,
    }


def auc(scored: ScoredSet) -> float:
    """
    Mann-Whitney AUC: mean over (positive, negative) pairs of
    [s_pos > s_neg] + 0.5 * [s_pos == s_neg], via midranks.
    """
    scored.require_both_classes()
    ranks = rankdata(scored.scores, method="average")
    n_pos, n_neg = scored.n_pos, scored.n_neg
    u = ranks[scored.labels == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def roc_points(scored: ScoredSet) -> pd.DataFrame:
    """Raw ROC points (fpr, tpr, threshold), one row per distinct threshold."""
    scored.require_both_classes()
    fpr, tpr, thresholds = roc_curve(scored.labels, scored.scores, drop_intermediate=False)
    return pd.DataFrame({"fpr": fpr, "tpr": tpr, "threshold": thresholds})


def score_metrics(scored: ScoredSet, threshold: float = 0.5) -> Dict[str, float]:
    """binary_metrics at the threshold plus AUC (NaN when a class is absent)."""
    metrics = binary_metrics(confusion_counts(scored.scores, scored.labels, threshold))
    metrics["auc"] = auc(scored) if scored.n_pos and scored.n_neg else float("nan")
    return metrics
