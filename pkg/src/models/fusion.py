"""Dual-stream fusion of TAFE and CMD logits."""

import torch
import torch.nn as nn

from src.models.config import FusionConfig
from src.utils.errors import ShapeError


class FusionHead(nn.Module):
    """MLP over the concatenation [C_TAFE, C_CMD]."""

    def __init__(self, n_cls: int, cfg: FusionConfig):
        super().__init__()
        self.n_cls = n_cls
        self.mlp = nn.Sequential(
            nn.Linear(2 * n_cls, cfg.hidden),
            nn.ReLU(),
            nn.Linear(cfg.hidden, n_cls),
        )

    def forward(self, c_tafe: torch.Tensor, c_cmd: torch.Tensor) -> torch.Tensor:
        for name, logits in (("C_TAFE", c_tafe), ("C_CMD", c_cmd)):
            if logits.ndim != 2 or logits.shape[1] != self.n_cls:
                raise ShapeError(f"{name} must be (B, {self.n_cls}), got {tuple(logits.shape)}")
        if c_tafe.shape[0] != c_cmd.shape[0]:
            raise ShapeError("C_TAFE and C_CMD batch sizes differ")
        return self.mlp(torch.cat([c_tafe, c_cmd], dim=1))


def fuse(c_tafe: torch.Tensor, c_cmd: torch.Tensor, head: FusionHead) -> torch.Tensor:
    return head(c_tafe, c_cmd)
