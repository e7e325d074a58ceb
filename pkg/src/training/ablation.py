"""
Ablation driver: one cross-validation per grid cell and seed, summarized as a
mean +/- std table with a one-way ANOVA over the cells' fold AUCs.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.config import RunConfig, apply_overrides
from src.core.volume_io import Manifest
from src.evaluation.report import METRICS, mean_std
from src.evaluation.statistics import AnovaTable, anova_posthoc
from src.training.config import AblationCell
from src.training.crossval import cross_validate
from src.utils.errors import InsufficientData, WriteError
from src.utils.logging_utils import get_logger, get_run_logger

logger = get_logger(__name__)

TABLE_FILE = "ablation.csv"
RUNS_FILE = "ablation_runs.csv"
ANOVA_FILE = "ablation_anova.csv"

TABLE_COLUMNS = ["config", "n_runs", "n_folds"] + [
    f"{m}_{s}" for m in METRICS for s in ("mean", "std")
]


def module_grid() -> List[AblationCell]:
    """TAFE only, CMD only and both streams fused."""
    return [
        AblationCell(
            name="TAFE",
            overrides={"train.modules.tafe_on": True, "train.modules.cmd_on": False},
        ),
        AblationCell(
            name="CMD",
            overrides={"train.modules.tafe_on": False, "train.modules.cmd_on": True},
        ),
        AblationCell(
            name="TAFE+CMD",
            overrides={"train.modules.tafe_on": True, "train.modules.cmd_on": True},
        ),
    ]


def depth_grid(max_depth: int = 4) -> List[AblationCell]:
    """
    TAFE-k (segmentation-supervised) and SwinT-k (alpha = 0) for k = 1..max_depth.

    Both variants run the TAFE stream alone.
    """
    cells = []
    for supervised, prefix in ((True, "TAFE"), (False, "SwinT")):
        for depth in range(1, max_depth + 1):
            cells.append(
                AblationCell(
                    name=f"{prefix}-{depth}",
                    overrides={
                        "train.modules.tafe_on": True,
                        "train.modules.cmd_on": False,
                        "train.modules.tafe_depth": depth,
                        "train.modules.seg_supervision_on": supervised,
                    },
                )
            )
    return cells


PRESETS = {"modules": module_grid, "depth": depth_grid}


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "cell"


@dataclass
class AblationResult:
    table: pd.DataFrame
    runs: pd.DataFrame
    anova: Optional[AnovaTable] = field(default=None, repr=False)


def run_ablation(
    manifest: Manifest,
    grid: Sequence[AblationCell],
    cfg: RunConfig,
    out_dir: Union[str, Path],
    jobs: int = 1,
) -> AblationResult:
    """
    Cross-validate every grid cell over the shared seed ladder.

    Args:
        manifest: Labeled manifest
        grid: Cells with dotted-key overrides of cfg
        cfg: Base run configuration; cfg.ablation.seeds is the seed ladder
        out_dir: Directory receiving <cell>/seed_<s>/ runs and the tables
        jobs: Fold parallelism inside each cross-validation

    Returns:
        AblationResult with one table row per cell, in grid order
    """
    out_dir = Path(out_dir)
    run_logger = get_run_logger(out_dir, "ablation")
    seeds = list(cfg.ablation.seeds)
    rows, run_rows = [], []
    fold_aucs = {}

    for cell in grid:
        cell_rows = []
        for seed in seeds:
            cell_cfg = apply_overrides(cfg, {**cell.overrides, "train.seed": seed})
            run_logger.info(f"Ablation cell '{cell.name}' seed {seed}")
            result = cross_validate(
                manifest,
                cell_cfg.train.folds,
                cell_cfg,
                out_dir / _slug(cell.name) / f"seed_{seed}",
                jobs=jobs,
                name=cell.name,
            )
            frame = result.fold_frame()
            frame.insert(1, "seed", seed)
            cell_rows.append(frame)
        cell_frame = pd.concat(cell_rows, ignore_index=True)
        run_rows.append(cell_frame)

        row = {"config": cell.name, "n_runs": len(seeds), "n_folds": len(cell_frame)}
        for metric in METRICS:
            row[f"{metric}_mean"], row[f"{metric}_std"] = mean_std(
                cell_frame[metric].to_numpy(), cfg.metrics.std_mode
            )
        rows.append(row)
        fold_aucs[cell.name] = cell_frame["auc"].to_numpy(dtype=np.float64)

    table = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    runs = pd.concat(run_rows, ignore_index=True) if run_rows else pd.DataFrame()
    anova = None
    if len(fold_aucs) >= 2:
        groups = {name: values[~np.isnan(values)] for name, values in fold_aucs.items()}
        try:
            anova = anova_posthoc(
                list(groups.values()),
                list(groups.keys()),
                method=cfg.metrics.posthoc,
                level=cfg.metrics.ci_level,
            )
        except InsufficientData as e:
            run_logger.warning(f"Skipping ANOVA across cells: {e}")

    _write(table, runs, anova, out_dir)
    run_logger.info(f"Ablation finished with {len(table)} cells")
    return AblationResult(table=table, runs=runs, anova=anova)


def _write(
    table: pd.DataFrame, runs: pd.DataFrame, anova: Optional[AnovaTable], out_dir: Path
) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_dir / TABLE_FILE, index=False)
        if not runs.empty:
            runs.to_csv(out_dir / RUNS_FILE, index=False)
        if anova is not None:
            anova.to_frame().to_csv(out_dir / ANOVA_FILE, index=False)
    except OSError as e:
        raise WriteError(f"Failed to write ablation tables into {out_dir}: {e}") from e
