"""
The multi-task network: segmentation backbone with TAFE and CMD streams fused
into final IDH logits.
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from src.models.backbone import Backbone, SegOutput
from src.models.cmd import CmdStream, MismatchFeatures
from src.models.config import ArchitectureConfig
from src.models.fusion import FusionHead
from src.models.tafe import TafeHead
from src.utils.errors import ConfigError
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)


@dataclass
class NetworkOutput:
    seg: SegOutput
    c_tafe: Optional[torch.Tensor]
    c_cmd: Optional[torch.Tensor]
    c_final: torch.Tensor


class IdhMultiTaskNet(nn.Module):
    """Backbone + TAFE + CMD + fusion, with either stream switchable off."""

    def __init__(self, arch: ArchitectureConfig):
        super().__init__()
        if not (arch.tafe_on or arch.cmd_on):
            raise ConfigError("At least one of the TAFE and CMD streams must be on")
        self.arch = arch
        self.backbone = Backbone(arch.backbone)
        self.tafe = TafeHead(arch.backbone, arch.tafe) if arch.tafe_on else None
        self.cmd = CmdStream(arch.cmd) if arch.cmd_on else None
        self.fusion = (
            FusionHead(arch.n_cls, arch.fusion) if arch.tafe_on and arch.cmd_on else None
        )

    @property
    def n_cls(self) -> int:
        return self.arch.n_cls

    def forward(self, x: torch.Tensor) -> NetworkOutput:
        pyramid, seg = self.backbone(x)
        c_tafe = self.tafe(pyramid) if self.tafe is not None else None
        c_cmd = self.cmd(x, seg.tumor_prob) if self.cmd is not None else None
        if self.fusion is not None:
            c_final = self.fusion(c_tafe, c_cmd)
        else:
            c_final = c_tafe if c_tafe is not None else c_cmd
        return NetworkOutput(seg=seg, c_tafe=c_tafe, c_cmd=c_cmd, c_final=c_final)

    @torch.no_grad()
    def mismatch_features(self, x: torch.Tensor) -> MismatchFeatures:
        """CMD features of a batch, gated by the network's own tumor probability."""
        if self.cmd is None:
            raise ConfigError("The CMD stream is off in this network")
        _, seg = self.backbone(x)
        return self.cmd.features(x, seg.tumor_prob)


def build_network(arch: ArchitectureConfig, seed: Optional[int] = None) -> IdhMultiTaskNet:
    """
    Build a network, optionally seeding parameter initialization.

    Args:
        arch: Architecture configuration
        seed: When given, torch.manual_seed(seed) runs before construction

    Returns:
        The network in training mode
    """
    if seed is not None:
        torch.manual_seed(seed)
    model = IdhMultiTaskNet(arch)
    n_params = sum(p.numel() for p in model.parameters())
    logger.debug(
        f"Built network with {n_params} parameters "
        f"(tafe_on={arch.tafe_on}, cmd_on={arch.cmd_on}, depth={arch.tafe.depth})"
    )
    return model


def logits_to_proba(logits: torch.Tensor) -> torch.Tensor:
    """(B, n_cls) logits to (B, max(n_cls, 2)) class probabilities."""
    if logits.shape[1] == 1:
        p = torch.sigmoid(logits)
        return torch.cat([1 - p, p], dim=1)
    return torch.softmax(logits, dim=1)


@torch.no_grad()
def predict_proba(model: IdhMultiTaskNet, batch: torch.Tensor) -> torch.Tensor:
    """Per-class probabilities of a batch in eval mode; column 1 is mutant."""
    was_training = model.training
    model.eval()
    try:
        return logits_to_proba(model(batch).c_final)
    finally:
        model.train(was_training)
