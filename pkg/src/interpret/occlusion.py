"""
Occlusion sensitivity.

A cube slides over the case on a stride grid; at every placement all four
sequences are filled inside the cube and the probability of the true class is
recorded. Each voxel's raw score is the mean occluded probability over the
placements covering it. MONAI's OcclusionSensitivity drives the sliding window
and the per-voxel averaging. Post-processing smooths, inverts and min-max
scales the raw scores into a saliency volume.
"""

from dataclasses import dataclass
from itertools import product
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
from monai.visualize import OcclusionSensitivity
from scipy.ndimage import gaussian_filter

from src.core.volume_io import Case
from src.interpret.config import OcclusionConfig
from src.models.network import logits_to_proba
from src.types.model import ProbaFunc
from src.utils.errors import ConfigError, MissingLabel, ShapeError
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)

Placement = Tuple[int, int, int]


@dataclass
class OcclusionResult:
    raw: np.ndarray
    baseline_prob: float
    n_evaluations: int
    target: int


def grid_starts(dim: int, mask_size: int, stride: int) -> List[int]:
    """Start offsets 0, stride, 2*stride, ... plus a final one clamped to dim - mask_size."""
    if mask_size > dim:
        raise ConfigError(f"Occlusion mask {mask_size} exceeds volume extent {dim}")
    if stride < 1:
        raise ConfigError(f"Occlusion stride must be >= 1, got {stride}")
    starts = list(range(0, dim - mask_size + 1, stride))
    if starts[-1] != dim - mask_size:
        starts.append(dim - mask_size)
    return starts


def placements(dims: Sequence[int], cfg: OcclusionConfig) -> List[Placement]:
    axes = [grid_starts(d, cfg.mask_size, cfg.stride) for d in dims]
    return list(product(*axes))


def as_predictor(model: Union[nn.Module, ProbaFunc]) -> ProbaFunc:
    """
    Wrap a network as a batch -> class-probability function.

    The network is put in eval mode here, once; the returned function never
    touches the module's mode.
    """
    if not isinstance(model, nn.Module):
        return model
    model.eval()
    device = next(model.parameters()).device

    @torch.no_grad()
    def _predict(batch: torch.Tensor) -> torch.Tensor:
        return logits_to_proba(model(batch.to(device)).c_final)

    return _predict


class _ShiftedProba(nn.Module):
    """
    Class probabilities of a case stored minus its per-sequence fill values.

    MONAI occludes with a constant zero; adding the fill back before the
    forward pass leaves exactly the fill value inside the cube.
    """

    def __init__(self, predictor: ProbaFunc, fill: torch.Tensor):
        super().__init__()
        self.predictor = predictor
        self.register_buffer("fill", fill.reshape(1, -1, 1, 1, 1))

    def forward(self, batch: torch.Tensor) -> torch.Tensor:
        proba = self.predictor(batch + self.fill)
        if proba.ndim != 2 or proba.shape[0] != batch.shape[0]:
            raise ShapeError(
                f"Probability function returned shape {tuple(proba.shape)} for {batch.shape[0]} inputs"
            )
        return proba.to(device=batch.device, dtype=batch.dtype)


def _fill_values(volumes: np.ndarray, cfg: OcclusionConfig) -> np.ndarray:
    if cfg.fill_policy == "volume-mean":
        return volumes.reshape(volumes.shape[0], -1).mean(axis=1).astype(volumes.dtype)
    return np.zeros(volumes.shape[0], dtype=volumes.dtype)


def occlusion_raw(
    model: Union[nn.Module, ProbaFunc], case: Case, cfg: OcclusionConfig
) -> OcclusionResult:
    """
    Per-voxel mean occluded probability of the ground-truth class.

    Args:
        model: Network (switched to eval mode for the call) or a batch -> probabilities callable
        case: Labeled, prepared case
        cfg: Mask size, overlap, fill policy and window batch size

    Returns:
        OcclusionResult with the raw (D, H, W) score volume
    """
    if case.idh_label is None:
        raise MissingLabel(f"Case {case.id} has no IDH label to occlude against")
    target = int(case.idh_label)
    was_training = isinstance(model, nn.Module) and model.training
    predictor = as_predictor(model)
    try:
        volumes = case.stack()
        grid = placements(volumes.shape[1:], cfg)
        fill = _fill_values(volumes, cfg)

        baseline = float(predictor(torch.from_numpy(volumes[None]))[0, target])
        occluder = OcclusionSensitivity(
            nn_module=_ShiftedProba(predictor, torch.from_numpy(fill)),
            mask_size=cfg.mask_size,
            n_batch=cfg.batch_size,
            verbose=False,
            mode=0.0,
            overlap=cfg.overlap,
            activate=False,
        )
        shifted = torch.from_numpy(volumes - fill[:, None, None, None])
        with torch.no_grad():
            sensitivity, _ = occluder(shifted[None])
        raw = np.asarray(sensitivity[0, target].detach().cpu().numpy(), dtype=np.float64)
    finally:
        if was_training and isinstance(model, nn.Module):
            model.train()

    logger.info(
        f"Occluded case {case.id}: {len(grid)} placements, baseline p={baseline:.4f}, "
        f"raw range [{raw.min():.4f}, {raw.max():.4f}]"
    )
    return OcclusionResult(raw=raw, baseline_prob=baseline, n_evaluations=len(grid), target=target)


def occlusion_postprocess(
    raw: np.ndarray, cfg: OcclusionConfig, baseline_prob: Optional[float] = None
) -> np.ndarray:
    """
    Smooth, invert and min-max normalize raw occlusion scores.

    Args:
        raw: Finite raw score volume
        cfg: smooth_sigma (0 disables smoothing) and invert mode
        baseline_prob: Unoccluded probability, required by invert="baseline"

    Returns:
        float32 saliency in [0, 1]; all zeros for a constant input
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ValueError("Raw occlusion scores must be finite")
    smoothed = raw
    if cfg.smooth_sigma > 0:
        smoothed = gaussian_filter(raw, sigma=cfg.smooth_sigma, mode="nearest")
    if cfg.invert == "baseline":
        if baseline_prob is None:
            raise ConfigError("invert='baseline' needs the unoccluded probability")
        inverted = baseline_prob - smoothed
    else:
        inverted = -smoothed
    low, span = inverted.min(), np.ptp(inverted)
    if span <= 1e-12:
        return np.zeros(raw.shape, dtype=np.float32)
    return ((inverted - low) / span).astype(np.float32)
