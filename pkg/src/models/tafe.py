"""
Tumor-aware feature encoding.

Globally pools the deepest `depth` encoder stages, concatenates the pooled
vectors (deepest last) and classifies them with a one-hidden-layer MLP.
"""

import torch
import torch.nn as nn

from src.models.backbone import FeaturePyramid
from src.models.config import BackboneConfig, TafeConfig
from src.utils.errors import ShapeError


def gap(x: torch.Tensor) -> torch.Tensor:
    """Global average pooling: (B, d, *spatial) -> (B, d)."""
    return x.flatten(start_dim=2).mean(dim=2)


def aggregate(pyramid: FeaturePyramid, depth: int) -> torch.Tensor:
    """Concatenate gap vectors of the deepest `depth` stages, deepest last."""
    return torch.cat([gap(x) for x in pyramid.deepest(depth)], dim=1)


def tafe_width(backbone: BackboneConfig, depth: int) -> int:
    return sum(backbone.stage_channels[len(backbone.stage_channels) - depth :])


class TafeHead(nn.Module):
    """Linear -> ReLU -> Dropout -> Linear over aggregated stage features."""

    def __init__(self, backbone: BackboneConfig, cfg: TafeConfig):
        super().__init__()
        self.depth = cfg.depth
        self.in_features = tafe_width(backbone, cfg.depth)
        self.mlp = nn.Sequential(
            nn.Linear(self.in_features, cfg.head_hidden),
            nn.ReLU(),
            nn.Dropout(cfg.dropout_rate),
            nn.Linear(cfg.head_hidden, cfg.n_cls),
        )

    def classify(self, features: torch.Tensor) -> torch.Tensor:
        if features.ndim != 2 or features.shape[1] != self.in_features:
            raise ShapeError(
                f"TAFE head expects (B, {self.in_features}), got {tuple(features.shape)}"
            )
        return self.mlp(features)

    def forward(self, pyramid: FeaturePyramid) -> torch.Tensor:
        return self.classify(aggregate(pyramid, self.depth))
