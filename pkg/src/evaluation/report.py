"""
Per-model mean +/- std reporting across folds, with DeLong intervals on pooled
scores and significance against a reference model.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.evaluation.config import MetricsConfig
from src.evaluation.metrics import ScoredSet, score_metrics
from src.evaluation.statistics import delong_ci, delong_paired_test
from src.types.model import StdMode
from src.utils.errors import DataError, DegenerateLabels, WriteError
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)

METRICS = ("acc", "f1", "mcc", "auc")
EXTRA_METRICS = ("precision", "recall", "specificity")


def mean_std(values: Sequence[float], std_mode: StdMode = "sample") -> Tuple[float, float]:
    """
    Mean and standard deviation ignoring NaNs.

    Sample mode divides by n - 1; a single value reports std 0.
    """
    arr = np.asarray(values, dtype=np.float64)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    ddof = 1 if std_mode == "sample" else 0
    return float(arr.mean()), float(arr.std(ddof=ddof))


def significance_marker(p_value: Optional[float]) -> str:
    if p_value is None or math.isnan(p_value):
        return ""
    if p_value < 1e-4:
        return "***"
    if p_value < 1e-3:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


@dataclass
class ModelPredictions:
    """Scored cases of one model, one ScoredSet per fold or run."""

    name: str
    folds: List[ScoredSet]

    def pooled(self) -> ScoredSet:
        """All folds concatenated, ordered by case id when ids are known."""
        scores = np.concatenate([f.scores for f in self.folds])
        labels = np.concatenate([f.labels for f in self.folds])
        if all(f.case_ids is not None for f in self.folds):
            ids = [c for f in self.folds for c in f.case_ids]
            order = np.argsort(np.asarray(ids), kind="stable")
            return ScoredSet(scores[order], labels[order], [ids[i] for i in order])
        return ScoredSet(scores, labels)


@dataclass
class MetricsReport:
    table: pd.DataFrame
    per_fold: pd.DataFrame
    comparisons: pd.DataFrame = field(default_factory=pd.DataFrame)

    def human_readable(self) -> str:
        rows = []
        for record in self.table.to_dict(orient="records"):
            row = {"model": record["model"], "folds": record["n_folds"]}
            for metric in METRICS:
                row[metric.upper()] = (
                    f"{100 * record[f'{metric}_mean']:.2f} ± {100 * record[f'{metric}_std']:.2f}"
                )
            row["AUC CI"] = (
                f"[{100 * record['auc_ci_low']:.2f}, {100 * record['auc_ci_high']:.2f}]"
            )
            row["sig"] = record.get("significance", "")
            rows.append(row)
        return pd.DataFrame(rows).to_string(index=False)


def build_report(
    models: Sequence[ModelPredictions], cfg: Optional[MetricsConfig] = None
) -> MetricsReport:
    """
    Summarize models across folds.

    Args:
        models: One entry per model, each with >= 1 fold
        cfg: Threshold, CI level, std mode and optional reference model

    Returns:
        MetricsReport with the summary table, per-fold rows and comparisons
    """
    cfg = cfg or MetricsConfig()
    if not models:
        raise DataError("A report needs at least one model")

    per_fold_rows = []
    summary_rows = []
    pooled: Dict[str, ScoredSet] = {}
    for model in models:
        if not model.folds:
            raise DataError(f"Model {model.name} has no folds")
        for index, scored in enumerate(model.folds):
            row = {"model": model.name, "fold": index, "n_cases": len(scored.labels)}
            row.update(score_metrics(scored, cfg.threshold))
            per_fold_rows.append(row)

        fold_frame = pd.DataFrame([r for r in per_fold_rows if r["model"] == model.name])
        summary = {"model": model.name, "n_folds": len(model.folds)}
        for metric in METRICS + EXTRA_METRICS:
            mean, std = mean_std(fold_frame[metric].to_numpy(), cfg.std_mode)
            summary[f"{metric}_mean"] = mean
            summary[f"{metric}_std"] = std

        pooled[model.name] = model.pooled()
        try:
            ci = delong_ci(pooled[model.name], cfg.ci_level)
            summary["auc_pooled"], summary["auc_ci_low"], summary["auc_ci_high"] = (
                ci.estimate,
                ci.ci_low,
                ci.ci_high,
            )
        except DegenerateLabels as e:
            logger.warning(f"No DeLong interval for {model.name}: {e}")
            summary["auc_pooled"] = summary["auc_ci_low"] = summary["auc_ci_high"] = float("nan")
        summary_rows.append(summary)

    table = pd.DataFrame(summary_rows)
    comparisons = pd.DataFrame()
    if cfg.reference_model is not None:
        if cfg.reference_model not in pooled:
            raise DataError(f"Reference model {cfg.reference_model!r} is not in the report")
        reference = pooled[cfg.reference_model]
        records = []
        for name, scored in pooled.items():
            result = delong_paired_test(scored, reference, cfg.ci_level)
            records.append(
                {
                    "model": name,
                    "reference": cfg.reference_model,
                    "statistic": result.statistic,
                    "p_value": result.p_value,
                    "auc_difference": result.estimate,
                    "ci_low": result.ci_low,
                    "ci_high": result.ci_high,
                    "method": result.method,
                }
            )
        comparisons = pd.DataFrame(records)
        p_by_model = dict(zip(comparisons["model"], comparisons["p_value"]))
        table["p_vs_reference"] = table["model"].map(p_by_model)
        table["significance"] = [
            "" if name == cfg.reference_model else significance_marker(p_by_model[name])
            for name in table["model"]
        ]

    return MetricsReport(table=table, per_fold=pd.DataFrame(per_fold_rows), comparisons=comparisons)


def write_report(report: MetricsReport, out_dir: Union[str, Path], prefix: str = "metrics") -> Path:
    """Write <prefix>_report.csv, <prefix>_folds.csv, comparisons and a text table."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        report.table.to_csv(out_dir / f"{prefix}_report.csv", index=False)
        report.per_fold.to_csv(out_dir / f"{prefix}_folds.csv", index=False)
        if not report.comparisons.empty:
            report.comparisons.to_csv(out_dir / f"{prefix}_comparisons.csv", index=False)
        with open(out_dir / f"{prefix}_report.txt", "w", encoding="utf-8") as f:
            f.write(report.human_readable() + "\n")
    except OSError as e:
        raise WriteError(f"Failed to write report into {out_dir}: {e}") from e
    logger.info(f"Wrote {prefix} report to {out_dir}")
    return out_dir / f"{prefix}_report.csv"
