"""
Stratified k-fold cross-validation, with optional held-out ensemble evaluation
on manifest rows tagged "test".
"""

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import StratifiedKFold

from src.config import RunConfig
from src.core.volume_io import Case, Manifest
from src.evaluation.report import (
    METRICS,
    MetricsReport,
    ModelPredictions,
    build_report,
    mean_std,
    write_report,
)
from src.training.ensemble import predict_ensemble
from src.training.trainer import FoldResult, prepare_cases, train_fold
from src.utils.errors import MissingLabel, StratificationError, WriteError
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)

FOLDS_FILE = "cv_folds.csv"
SUMMARY_FILE = "cv_summary.csv"
PREDICTIONS_FILE = "cv_predictions.csv"
HELDOUT_PREDICTIONS_FILE = "heldout_predictions.csv"


@dataclass
class CVResult:
    name: str
    folds: List[FoldResult]
    summary: Dict[str, Tuple[float, float]]
    heldout: Optional[MetricsReport] = None
    heldout_predictions: Optional[pd.DataFrame] = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.folds)

    def fold_frame(self) -> pd.DataFrame:
        """One row per (config, fold)."""
        rows = []
        for fold in self.folds:
            row = {
                "config": self.name,
                "fold": fold.fold_index,
                "n_val": len(fold.val_predictions.labels),
                "best_epoch": fold.best_epoch,
                "epochs_run": fold.epochs_run,
            }
            row.update(fold.metrics)
            rows.append(row)
        return pd.DataFrame(rows)

    def summary_frame(self) -> pd.DataFrame:
        row = {"config": self.name, "k": self.k}
        for metric in METRICS:
            row[f"{metric}_mean"], row[f"{metric}_std"] = self.summary[metric]
        return pd.DataFrame([row])

    def prediction_frame(self) -> pd.DataFrame:
        rows = []
        for fold in self.folds:
            scored = fold.val_predictions
            for case_id, label, score in zip(scored.case_ids, scored.labels, scored.scores):
                rows.append(
                    {
                        "case_id": case_id,
                        "fold": fold.fold_index,
                        "idh_label": int(label),
                        "score": score,
                    }
                )
        return pd.DataFrame(rows).sort_values("case_id", kind="stable").reset_index(drop=True)


def fold_assignments(
    labels: Sequence[int], k: int, seed: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Seeded stratified (train_idx, val_idx) pairs.

    Args:
        labels: Binary labels of the pool
        k: Number of folds
        seed: Shuffle seed

    Returns:
        k index pairs; every index appears in exactly one validation fold
    """
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=2)
    if k < 2:
        raise StratificationError(f"k must be >= 2, got {k}")
    if counts.min() < k:
        raise StratificationError(
            f"Cannot stratify {k} folds: class counts are {counts.tolist()}"
        )
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return list(splitter.split(np.zeros(labels.size), labels))


def fold_seed(seed: int, fold_index: int) -> int:
    """Independent per-fold seed derived from the run seed."""
    return int(np.random.SeedSequence([seed, fold_index]).generate_state(1)[0])


def _run_fold(
    args: Tuple[List[Case], List[Case], RunConfig, Path, int, int]
) -> FoldResult:
    train_cases, val_cases, cfg, out_dir, index, seed = args
    return train_fold(train_cases, val_cases, cfg, out_dir, fold_index=index, seed=seed)


def _load_labeled(manifest: Manifest) -> List[Case]:
    missing = [row.case_id for row in manifest if row.idh_label is None]
    if missing:
        raise MissingLabel(f"Cases without IDH label: {missing[:5]}")
    return manifest.load_cases()


def cross_validate(
    manifest: Manifest,
    k: int,
    cfg: RunConfig,
    out_dir: Union[str, Path],
    jobs: int = 1,
    name: str = "model",
) -> CVResult:
    """
    Train k stratified folds and aggregate their validation metrics.

    Rows tagged "test" are excluded from the folds; when present, the fold
    checkpoints are ensembled on them and a held-out report is written.

    Args:
        manifest: Labeled manifest
        k: Number of folds (2 <= k <= minority-class count)
        cfg: Run configuration; cfg.train.seed seeds the split and the folds
        out_dir: Directory receiving fold_<i>/ and the CV tables
        jobs: Folds trained in parallel processes when > 1
        name: Config name written in the tables

    Returns:
        CVResult over exactly k folds
    """
    out_dir = Path(out_dir)
    pool = manifest.split(exclude=("test",))
    cases = prepare_cases(_load_labeled(pool), cfg)
    labels = [c.idh_label for c in cases]
    splits = fold_assignments(labels, k, cfg.train.seed)
    logger.info(
        f"Cross-validating '{name}' over {len(cases)} cases "
        f"({sum(labels)} mutant) with k={k}, jobs={jobs}"
    )

    tasks = [
        (
            [cases[i] for i in train_idx],
            [cases[i] for i in val_idx],
            cfg,
            out_dir / f"fold_{index}",
            index,
            fold_seed(cfg.train.seed, index),
        )
        for index, (train_idx, val_idx) in enumerate(splits)
    ]
    if jobs > 1:
        context = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(jobs, k), mp_context=context) as executor:
            folds = list(executor.map(_run_fold, tasks))
    else:
        folds = [_run_fold(task) for task in tasks]

    summary = {
        metric: mean_std([f.metrics[metric] for f in folds], cfg.metrics.std_mode)
        for metric in METRICS
    }
    result = CVResult(name=name, folds=folds, summary=summary)

    test = manifest.with_split(("test",))
    if len(test):
        _evaluate_heldout(result, test, cfg, out_dir)

    _write_tables(result, out_dir)
    logger.info(
        f"CV '{name}': "
        + ", ".join(f"{m}={mean:.4f}±{std:.4f}" for m, (mean, std) in summary.items())
    )
    return result


def _evaluate_heldout(result: CVResult, test: Manifest, cfg: RunConfig, out_dir: Path) -> None:
    cases = prepare_cases(test.load_cases(), cfg)
    prediction = predict_ensemble(
        [f.checkpoint_path for f in result.folds], cases, cfg.train.eval_batch_size
    )
    frame = pd.DataFrame({"case_id": prediction.case_ids, "score": prediction.positive})
    for m, member in enumerate(prediction.members):
        frame[f"score_fold_{m}"] = member[:, 1]
    frame["idh_label"] = [c.idh_label for c in cases]
    result.heldout_predictions = frame
    if all(c.idh_label is not None for c in cases):
        scored = prediction.scored([c.idh_label for c in cases])
        result.heldout = build_report([ModelPredictions(result.name, [scored])], cfg.metrics)
        write_report(result.heldout, out_dir, prefix="heldout")
    else:
        logger.warning("Held-out cases lack labels; writing predictions only")


def _write_tables(result: CVResult, out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        result.fold_frame().to_csv(out_dir / FOLDS_FILE, index=False)
        result.summary_frame().to_csv(out_dir / SUMMARY_FILE, index=False)
        result.prediction_frame().to_csv(out_dir / PREDICTIONS_FILE, index=False)
        if result.heldout_predictions is not None:
            result.heldout_predictions.to_csv(out_dir / HELDOUT_PREDICTIONS_FILE, index=False)
    except OSError as e:
        raise WriteError(f"Failed to write CV tables into {out_dir}: {e}") from e
