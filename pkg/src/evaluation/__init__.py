"""
Evaluation metrics, statistics and reports.
"""

from src.evaluation.metrics import ConfusionCounts, ScoredSet, auc, binary_metrics
from src.evaluation.report import MetricsReport, ModelPredictions, build_report
from src.evaluation.statistics import anova_posthoc, delong_ci, delong_paired_test

__all__ = [
    "ConfusionCounts",
    "ScoredSet",
    "auc",
    "binary_metrics",
    "MetricsReport",
    "ModelPredictions",
    "build_report",
    "anova_posthoc",
    "delong_ci",
    "delong_paired_test",
]
