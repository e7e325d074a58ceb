"""Averaged predictions of several checkpoints of one architecture."""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from src.core.volume_io import Case
from src.evaluation.metrics import ScoredSet
from src.models.checkpoint import (
    architecture_digest,
    checkpoint_architecture,
    load_checkpoint,
)
from src.models.network import build_network
from src.training.trainer import default_device, predict_cases
from src.utils.errors import CheckpointMismatch, MissingLabel
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)


@dataclass
class EnsemblePrediction:
    """Mean (n, n_classes) probabilities and the (m, n, n_classes) member values."""

    case_ids: List[str]
    mean: np.ndarray
    members: np.ndarray

    @property
    def positive(self) -> np.ndarray:
        return self.mean[:, 1]

    def scored(self, labels: Sequence[Optional[int]]) -> ScoredSet:
        if any(label is None for label in labels):
            raise MissingLabel("Scoring an ensemble needs every case labeled")
        return ScoredSet(self.positive, list(labels), self.case_ids)


def predict_ensemble(
    checkpoints: Sequence[Union[str, Path]],
    cases: Sequence[Case],
    batch_size: int = 4,
) -> EnsemblePrediction:
    """
    Arithmetic mean of class probabilities over checkpoints.

    Args:
        checkpoints: One or more checkpoints sharing an architecture config
        cases: Prepared cases at the network input size
        batch_size: Inference batch size

    Returns:
        EnsemblePrediction with mean and per-checkpoint probabilities
    """
    if not checkpoints:
        raise CheckpointMismatch("An ensemble needs at least one checkpoint")
    arch = checkpoint_architecture(checkpoints[0])
    digest = architecture_digest(arch)
    device = default_device()
    model = build_network(arch).to(device)

    members = []
    for path in checkpoints:
        # Strict load with the first member's digest rejects mixed architectures
        load_checkpoint(path, model, strict=True, expected_digest=digest)
        members.append(predict_cases(model, cases, batch_size, device))
    stacked = np.stack(members)
    logger.info(f"Ensembled {len(checkpoints)} checkpoints over {len(cases)} cases")
    return EnsemblePrediction(
        case_ids=[c.id for c in cases], mean=stacked.mean(axis=0), members=stacked
    )
