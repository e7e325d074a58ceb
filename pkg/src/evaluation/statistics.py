"""
Statistical machinery for AUC comparisons and group tests.

DeLong variance and covariance of AUCs use the midrank formulation of the
structural components: for each positive case, the fraction of negatives it
outranks (ties count half), and for each negative case, the fraction of
positives that outrank it.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import betainc
from statsmodels.stats.multitest import multipletests

from src.evaluation.metrics import ScoredSet
from src.types.model import PosthocMethod
from src.utils.errors import InsufficientData, PairingError


@dataclass
class ComparisonResult:
    statistic: float
    p_value: float
    estimate: float
    ci_low: float
    ci_high: float
    method: str
    label: str = ""
    std_error: float = float("nan")


def delong_components(
    scores: np.ndarray, labels: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    AUCs and structural components of k score vectors over the same cases.

    Args:
        scores: (k, n) positive-class scores
        labels: (n,) binary labels

    Returns:
        (aucs (k,), v_pos (k, m), v_neg (k, n_neg)) where m is the positive count
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    positive = labels == 1
    pos, neg = scores[:, positive], scores[:, ~positive]
    m, n = pos.shape[1], neg.shape[1]

    tz = np.apply_along_axis(stats.rankdata, 1, np.concatenate([pos, neg], axis=1))
    tx = np.apply_along_axis(stats.rankdata, 1, pos)
    ty = np.apply_along_axis(stats.rankdata, 1, neg)

    aucs = tz[:, :m].sum(axis=1) / (m * n) - (m + 1.0) / (2.0 * n)
    v_pos = (tz[:, :m] - tx) / n
    v_neg = 1.0 - (tz[:, m:] - ty) / m
    return aucs, v_pos, v_neg


def delong_covariance(scores: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """AUCs and their (k, k) DeLong covariance matrix."""
    aucs, v_pos, v_neg = delong_components(scores, labels)
    m, n = v_pos.shape[1], v_neg.shape[1]
    cov = np.atleast_2d(np.cov(v_pos)) / m + np.atleast_2d(np.cov(v_neg)) / n
    return aucs, cov


def _z(level: float) -> float:
    return float(stats.norm.ppf(1 - (1 - level) / 2))


def delong_ci(scored: ScoredSet, level: float = 0.95) -> ComparisonResult:
    """
    AUC with a DeLong confidence interval.

    The statistic is the z-score of AUC against 0.5; the interval is
    AUC +/- z * sqrt(var), clipped to [0, 1].
    """
    scored.require_both_classes(minimum=2)
    aucs, cov = delong_covariance(scored.scores[None, :], scored.labels)
    estimate = float(aucs[0])
    variance = max(float(cov[0, 0]), 0.0)
    se = math.sqrt(variance)
    half = _z(level) * se
    if se > 0:
        statistic = (estimate - 0.5) / se
        p_value = float(2 * stats.norm.sf(abs(statistic)))
    else:
        statistic = 0.0 if estimate == 0.5 else math.copysign(math.inf, estimate - 0.5)
        p_value = 1.0 if estimate == 0.5 else 0.0
    return ComparisonResult(
        statistic=statistic,
        p_value=p_value,
        estimate=estimate,
        ci_low=max(0.0, estimate - half),
        ci_high=min(1.0, estimate + half),
        method="delong-ci",
        std_error=se,
    )


def _check_pairing(set_a: ScoredSet, set_b: ScoredSet) -> None:
    if set_a.labels.shape != set_b.labels.shape or not np.array_equal(
        set_a.labels, set_b.labels
    ):
        raise PairingError("Paired sets must share the same cases and labels")
    if set_a.case_ids is not None and set_b.case_ids is not None:
        if list(set_a.case_ids) != list(set_b.case_ids):
            raise PairingError("Paired sets list different case ids")


def delong_paired_test(
    set_a: ScoredSet, set_b: ScoredSet, level: float = 0.95
) -> ComparisonResult:
    """
    Two-sided DeLong test of AUC_A - AUC_B on the same cases.

    Args:
        set_a: Scores of model A
        set_b: Scores of model B over the same cases and labels
        level: Confidence level of the difference interval

    Returns:
        ComparisonResult with z statistic, p-value and the AUC difference
    """
    _check_pairing(set_a, set_b)
    set_a.require_both_classes(minimum=2)
    if np.array_equal(set_a.scores, set_b.scores):
        return ComparisonResult(0.0, 1.0, 0.0, 0.0, 0.0, "delong-paired", std_error=0.0)

    aucs, cov = delong_covariance(np.vstack([set_a.scores, set_b.scores]), set_a.labels)
    diff = float(aucs[0] - aucs[1])
    variance = float(cov[0, 0] + cov[1, 1] - 2 * cov[0, 1])
    if variance <= 0:
        statistic = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        p_value = 1.0 if diff == 0 else 0.0
        se = 0.0
    else:
        se = math.sqrt(variance)
        statistic = diff / se
        p_value = float(min(1.0, 2 * stats.norm.sf(abs(statistic))))
    half = _z(level) * se
    return ComparisonResult(
        statistic=statistic,
        p_value=p_value,
        estimate=diff,
        ci_low=max(-1.0, diff - half),
        ci_high=min(1.0, diff + half),
        method="delong-paired",
        std_error=se,
    )


def f_survival(f_stat: float, df1: float, df2: float) -> float:
    """P(F > f) for the F distribution, via the regularized incomplete beta."""
    if f_stat <= 0:
        return 1.0
    if math.isinf(f_stat):
        return 0.0
    return float(betainc(df2 / 2, df1 / 2, df2 / (df2 + df1 * f_stat)))


@dataclass
class AnovaTable:
    """One-way ANOVA result and corrected post-hoc pairwise comparisons."""

    omnibus: ComparisonResult
    pairwise: List[ComparisonResult] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = [self.omnibus] + self.pairwise
        return pd.DataFrame([r.__dict__ for r in rows])


def _pairwise_t(
    a: np.ndarray, b: np.ndarray, level: float
) -> Tuple[float, float, float, float, float]:
    estimate = float(a.mean() - b.mean())
    result = stats.ttest_ind(a, b)
    statistic, p_value = float(result.statistic), float(result.pvalue)
    if math.isnan(statistic):
        # Both groups constant
        statistic = 0.0 if estimate == 0 else math.copysign(math.inf, estimate)
        p_value = 1.0 if estimate == 0 else 0.0
        return statistic, p_value, estimate, estimate, estimate
    ci = result.confidence_interval(confidence_level=level)
    return statistic, p_value, estimate, float(ci.low), float(ci.high)


def anova_posthoc(
    groups: Sequence[Sequence[float]],
    labels: Optional[Sequence[str]] = None,
    method: PosthocMethod = "bonferroni",
    level: float = 0.95,
) -> AnovaTable:
    """
    One-way ANOVA with post-hoc pairwise t-tests.

    Args:
        groups: At least two groups of at least two samples each
        labels: Group names (defaults to g0, g1, ...)
        method: Multiple-comparison correction for the pairwise p-values
        level: Confidence level of the pairwise mean-difference intervals

    Returns:
        AnovaTable with the F test and one corrected comparison per pair
    """
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrays) < 2 or min(a.size for a in arrays) < 2:
        raise InsufficientData("ANOVA needs >= 2 groups with >= 2 samples each")
    labels = list(labels) if labels is not None else [f"g{i}" for i in range(len(arrays))]

    k = len(arrays)
    n_total = sum(a.size for a in arrays)
    grand = np.concatenate(arrays).mean()
    ssb = float(sum(a.size * (a.mean() - grand) ** 2 for a in arrays))
    ssw = float(sum(((a - a.mean()) ** 2).sum() for a in arrays))
    df1, df2 = k - 1, n_total - k
    if ssw == 0:
        f_stat = 0.0 if ssb == 0 else math.inf
    else:
        f_stat = (ssb / df1) / (ssw / df2)
    omnibus = ComparisonResult(
        statistic=f_stat,
        p_value=f_survival(f_stat, df1, df2),
        estimate=f_stat,
        ci_low=f_stat,
        ci_high=f_stat,
        method=f"anova-f({df1},{df2})",
        label="omnibus",
    )

    pairs = list(combinations(range(k), 2))
    raw = [_pairwise_t(arrays[i], arrays[j], level) for i, j in pairs]
    corrected = multipletests([r[1] for r in raw], method=method)[1] if raw else []
    pairwise = [
        ComparisonResult(
            statistic=stat,
            p_value=float(min(1.0, p_adj)),
            estimate=est,
            ci_low=low,
            ci_high=high,
            method=f"t-test+{method}",
            label=f"{labels[i]} vs {labels[j]}",
        )
        for (i, j), (stat, _, est, low, high), p_adj in zip(pairs, raw, corrected)
    ]
    return AnovaTable(omnibus=omnibus, pairwise=pairwise)
