"""
Joint training objective: soft Dice segmentation loss and weighted
cross-entropy classification loss.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from monai.losses import DiceLoss

from src.models.config import SEG_CHANNELS
from src.training.config import LossConfig
from src.utils.errors import InvalidLabel, InvalidMask


@dataclass
class LossTerms:
    total: torch.Tensor
    seg: torch.Tensor
    cla: torch.Tensor

    def as_floats(self):
        return float(self.total.detach()), float(self.seg.detach()), float(self.cla.detach())


def one_hot_mask(labels: torch.Tensor, n_channels: int = SEG_CHANNELS) -> torch.Tensor:
    """(B, D, H, W) integer labels to (B, C, D, H, W) one-hot."""
    labels = labels.long()
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_channels):
        raise InvalidMask(
            f"Mask labels must lie in [0, {n_channels - 1}], "
            f"got [{int(labels.min())}, {int(labels.max())}]"
        )
    return F.one_hot(labels, n_channels).movedim(-1, 1)


def dice_criterion(eps: float = 1e-5, softmax: bool = True) -> DiceLoss:
    """
    MONAI soft Dice, 1 - (2 * sum(p*g) + eps) / (sum(p) + sum(g) + eps), averaged
    over batch and channels with the background channel included.
    """
    return DiceLoss(
        include_background=True,
        to_onehot_y=False,
        softmax=softmax,
        smooth_nr=eps,
        smooth_dr=eps,
        reduction="mean",
    )


def dice_loss(logits: torch.Tensor, mask: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """
    Soft Dice loss over softmax probabilities.

    Args:
        logits: (B, 4, D, H, W) segmentation logits
        mask: (B, D, H, W) labels in {0..3}
        eps: Smoothing term

    Returns:
        1 - mean Dice over batch and channels, background included
    """
    onehot = one_hot_mask(mask, logits.shape[1]).to(logits.dtype)
    return dice_criterion(eps)(logits, onehot)


def ce_loss(
    logits: torch.Tensor, y: torch.Tensor, class_weights: Optional[Sequence[float]] = None
) -> torch.Tensor:
    """
    Mean weighted negative log-likelihood of the true class.

    A single-logit head is treated as a sigmoid over the mutant class. Each
    sample's loss is multiplied by the weight of its class before averaging.
    """
    y = y.long()
    n_classes = max(logits.shape[1], 2)
    if y.numel() and (y.min() < 0 or y.max() >= n_classes):
        raise InvalidLabel(f"Class labels must lie in [0, {n_classes - 1}]")
    if logits.shape[1] == 1:
        per_sample = F.binary_cross_entropy_with_logits(
            logits[:, 0], y.to(logits.dtype), reduction="none"
        )
    else:
        per_sample = F.cross_entropy(logits, y, reduction="none")
    if class_weights is not None:
        weights = torch.as_tensor(class_weights, dtype=logits.dtype, device=logits.device)
        per_sample = per_sample * weights[y]
    return per_sample.mean()


def total_loss(
    seg_logits: torch.Tensor,
    mask: Optional[torch.Tensor],
    class_logits: torch.Tensor,
    y: torch.Tensor,
    cfg: LossConfig,
    seg_supervision_on: bool = True,
) -> LossTerms:
    """
    alpha * L_seg + beta * L_cla, returned with both components.

    Segmentation supervision off, or no mask, makes the effective alpha 0.
    """
    cla = ce_loss(class_logits, y, cfg.class_weights)
    if mask is None:
        seg = torch.zeros((), dtype=cla.dtype, device=cla.device)
    else:
        seg = dice_loss(seg_logits, mask, cfg.dice_smooth)
    alpha = cfg.alpha if seg_supervision_on else 0.0
    return LossTerms(total=alpha * seg + cfg.beta * cla, seg=seg, cla=cla)
