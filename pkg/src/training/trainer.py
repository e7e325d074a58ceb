"""
Single-fold training: joint segmentation + classification optimization with
online augmentation, class-balanced epochs, accuracy-based early stopping and
best-epoch checkpointing.
"""

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from src.config import RunConfig
from src.core.preprocessing import preprocess_case
from src.core.volume_io import Case
from src.evaluation.metrics import ScoredSet, score_metrics
from src.models.checkpoint import load_checkpoint, save_checkpoint
from src.models.network import IdhMultiTaskNet, build_network, predict_proba
from src.training.augment import augment_arrays
from src.training.losses import total_loss
from src.utils.errors import DataError, DivergenceError, EmptySplit, MissingLabel
from src.utils.logging_utils import get_logger, get_run_logger
from src.utils.utils import append_jsonl, make_rng

logger = get_logger(__name__)

HISTORY_FILE = "history.jsonl"
BEST_CHECKPOINT = "best.safetensors"


def default_device() -> torch.device:
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


@dataclass
class EpochRecord:
    epoch: int
    L_total: float
    L_seg: float
    L_cla: float
    val_acc: float
    val_auc: float

    def as_dict(self) -> Dict[str, Optional[float]]:
        record = dict(self.__dict__)
        # NaN AUC (single-class validation set) is written as null
        record["val_auc"] = None if math.isnan(self.val_auc) else self.val_auc
        return record


@dataclass
class FoldResult:
    fold_index: int
    best_epoch: int
    epochs_run: int
    history: List[EpochRecord]
    checkpoint_path: Path
    val_predictions: ScoredSet
    best_val_acc: float = float("nan")
    metrics: Dict[str, float] = field(default_factory=dict)


class EarlyStopping:
    """
    Patience counter over a maximized validation metric.

    Only a strict improvement resets the counter, so ties keep the earliest
    best epoch. Epochs are numbered from 1.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.epochs = 0
        self.bad_epochs = 0

    def step(self, value: float) -> bool:
        """Record one epoch's metric; True when it is a new best."""
        self.epochs += 1
        if value > self.best:
            self.best = value
            self.best_epoch = self.epochs
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def early_stopping_trace(
    values: Sequence[float], patience: int, max_epochs: Optional[int] = None
) -> Tuple[int, int]:
    """(epochs_run, best_epoch) of the stopping rule over a metric trace."""
    stopper = EarlyStopping(patience)
    limit = len(values) if max_epochs is None else min(max_epochs, len(values))
    for value in values[:limit]:
        stopper.step(value)
        if stopper.should_stop:
            break
    return stopper.epochs, stopper.best_epoch


def prepare_cases(cases: Sequence[Case], cfg: RunConfig) -> List[Case]:
    """Crop every case to the network input size and z-score its sequences."""
    return [preprocess_case(c, cfg.input_size, cfg.data.norm_region) for c in cases]


def cases_to_batch(
    cases: Sequence[Case],
    device: torch.device,
    dtype: torch.dtype = torch.float32,
) -> Tuple[torch.Tensor, Optional[torch.Tensor], Optional[torch.Tensor]]:
    """
    Stack cases into (x, mask, y) tensors.

    The mask is None unless every case has one; y is None unless every case
    is labeled.
    """
    x = torch.from_numpy(np.stack([c.stack() for c in cases])).to(device=device, dtype=dtype)
    masks = [c.mask_array() for c in cases]
    mask = None
    if all(m is not None for m in masks):
        mask = torch.from_numpy(np.stack(masks).astype(np.int64)).to(device)
    labels = [c.idh_label for c in cases]
    y = None
    if all(label is not None for label in labels):
        y = torch.as_tensor(labels, dtype=torch.long, device=device)
    return x, mask, y


def predict_cases(
    model: IdhMultiTaskNet,
    cases: Sequence[Case],
    batch_size: int = 4,
    device: Optional[torch.device] = None,
) -> np.ndarray:
    """(n, n_classes) probabilities of prepared cases, in case order."""
    device = device or next(model.parameters()).device
    probas = []
    for start in range(0, len(cases), batch_size):
        x, _, _ = cases_to_batch(cases[start : start + batch_size], device)
        probas.append(predict_proba(model, x).cpu().double().numpy())
    return np.concatenate(probas, axis=0)


def score_cases(
    model: IdhMultiTaskNet, cases: Sequence[Case], batch_size: int = 4
) -> ScoredSet:
    """Mutant-class scores of labeled cases."""
    proba = predict_cases(model, cases, batch_size)
    return ScoredSet(proba[:, 1], [c.idh_label for c in cases], [c.id for c in cases])


def epoch_order(labels: Sequence[int], rng: np.random.Generator, balance: bool) -> np.ndarray:
    """
    Case indices visited in one epoch.

    With balancing, minority cases are repeated (whole copies first, then a
    draw without replacement for the remainder) until both classes contribute
    equally; the result is shuffled.
    """
    labels = np.asarray(labels)
    indices = np.arange(labels.size)
    pos, neg = indices[labels == 1], indices[labels == 0]
    if balance and pos.size and neg.size and pos.size != neg.size:
        minority, majority = (pos, neg) if pos.size < neg.size else (neg, pos)
        copies, remainder = divmod(majority.size, minority.size)
        extra = rng.choice(minority, size=remainder, replace=False)
        indices = np.concatenate([majority, np.tile(minority, copies), extra])
    return rng.permutation(indices)


def _check_split(train_cases: Sequence[Case], val_cases: Sequence[Case]) -> None:
    if not train_cases:
        raise EmptySplit("Training split is empty")
    if not val_cases:
        raise EmptySplit("Validation split is empty")
    for case in list(train_cases) + list(val_cases):
        if case.idh_label is None:
            raise MissingLabel(f"Case {case.id} has no IDH label")
    overlap = {c.id for c in train_cases} & {c.id for c in val_cases}
    if overlap:
        raise DataError(f"Train and validation splits share cases {sorted(overlap)[:5]}")


def train_fold(
    train_cases: Sequence[Case],
    val_cases: Sequence[Case],
    cfg: RunConfig,
    out_dir: Union[str, Path],
    fold_index: int = 0,
    seed: Optional[int] = None,
) -> FoldResult:
    """
    Train one fold and keep the best-accuracy epoch.

    Args:
        train_cases: Prepared, labeled training cases
        val_cases: Prepared, labeled validation cases, disjoint from training
        cfg: Run configuration
        out_dir: Directory receiving history.jsonl, best.safetensors and logs
        fold_index: Fold number used in logs and results
        seed: Seed for initialization, dropout and augmentation
            (defaults to cfg.train.seed)

    Returns:
        FoldResult describing the best epoch
    """
    _check_split(train_cases, val_cases)
    seed = cfg.train.seed if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_logger = get_run_logger(out_dir, f"fold{fold_index}")
    history_path = out_dir / HISTORY_FILE
    history_path.unlink(missing_ok=True)
    checkpoint_path = out_dir / BEST_CHECKPOINT

    tcfg = cfg.train
    arch = cfg.architecture()
    device = default_device()
    model = build_network(arch, seed).to(device)
    if tcfg.init_checkpoint:
        report = load_checkpoint(tcfg.init_checkpoint, model, strict=False)
        run_logger.info(
            f"Initialized from {tcfg.init_checkpoint}: {len(report.loaded)} tensors loaded, "
            f"{len(report.missing)} kept their initialization"
        )
    optimizer = torch.optim.Adam(
        model.parameters(), lr=tcfg.learning_rate, betas=tcfg.adam_betas, eps=tcfg.adam_eps
    )
    rng = make_rng(seed)
    labels = [c.idh_label for c in train_cases]
    seg_on = tcfg.modules.seg_supervision_on

    stopper = EarlyStopping(tcfg.patience)
    history: List[EpochRecord] = []
    best_state = copy.deepcopy(model.state_dict())
    best_predictions: Optional[ScoredSet] = None
    run_logger.info(
        f"Fold {fold_index}: {len(train_cases)} train / {len(val_cases)} val cases, seed {seed}"
    )

    for epoch in range(1, tcfg.max_epochs + 1):
        model.train()
        order = epoch_order(labels, rng, tcfg.balance_classes)
        sums = np.zeros(3)
        seen = 0
        for start in range(0, order.size, tcfg.batch_size):
            batch_cases = [train_cases[i] for i in order[start : start + tcfg.batch_size]]
            augmented = []
            for case in batch_cases:
                volumes, mask = augment_arrays(case.stack(), case.mask_array(), rng, tcfg.augment)
                augmented.append((volumes, mask, case.idh_label))
            x = torch.from_numpy(np.stack([a[0] for a in augmented])).to(device)
            mask = None
            if all(a[1] is not None for a in augmented):
                masks = np.stack([a[1] for a in augmented]).astype(np.int64)
                mask = torch.from_numpy(masks).to(device)
            y = torch.as_tensor([a[2] for a in augmented], dtype=torch.long, device=device)

            optimizer.zero_grad(set_to_none=True)
            output = model(x)
            terms = total_loss(output.seg.logits, mask, output.c_final, y, cfg.loss, seg_on)
            values = terms.as_floats()
            if not all(math.isfinite(v) for v in values):
                batch_index = start // tcfg.batch_size
                run_logger.error(
                    f"Non-finite loss at fold {fold_index} epoch {epoch} batch {batch_index}: "
                    f"L_total={values[0]}, L_seg={values[1]}, L_cla={values[2]}, "
                    f"cases={[c.id for c in batch_cases]}"
                )
                raise DivergenceError(
                    f"Loss diverged at fold {fold_index}, epoch {epoch} (L_total={values[0]})"
                )
            terms.total.backward()
            optimizer.step()
            sums += np.asarray(values) * len(batch_cases)
            seen += len(batch_cases)

        val_scored = score_cases(model, val_cases, tcfg.eval_batch_size)
        val_metrics = score_metrics(val_scored, cfg.metrics.threshold)
        means = sums / max(seen, 1)
        record = EpochRecord(
            epoch=epoch,
            L_total=float(means[0]),
            L_seg=float(means[1]),
            L_cla=float(means[2]),
            val_acc=float(val_metrics["acc"]),
            val_auc=float(val_metrics["auc"]),
        )
        history.append(record)
        append_jsonl(history_path, record.as_dict())

        if stopper.step(record.val_acc):
            best_state = copy.deepcopy(model.state_dict())
            best_predictions = val_scored
            save_checkpoint(
                model,
                checkpoint_path,
                arch,
                extra={
                    "fold": fold_index,
                    "epoch": epoch,
                    "val_acc": record.val_acc,
                    "seed": seed,
                },
            )
        run_logger.info(
            f"Fold {fold_index} epoch {epoch}: L_total={record.L_total:.4f} "
            f"L_seg={record.L_seg:.4f} L_cla={record.L_cla:.4f} "
            f"val_acc={record.val_acc:.4f} val_auc={record.val_auc:.4f}"
        )
        if stopper.should_stop:
            run_logger.info(
                f"Early stopping at epoch {epoch}; best epoch {stopper.best_epoch} "
                f"(val_acc={stopper.best:.4f})"
            )
            break

    model.load_state_dict(best_state)
    return FoldResult(
        fold_index=fold_index,
        best_epoch=stopper.best_epoch,
        epochs_run=stopper.epochs,
        history=history,
        checkpoint_path=checkpoint_path,
        val_predictions=best_predictions,
        best_val_acc=stopper.best,
        metrics=score_metrics(best_predictions, cfg.metrics.threshold),
    )
