"""
Cross-modality differential stream.

T2 and FLAIR are softly gated by the whole-tumor probability, passed through
one shared 3D conv stack, and their amplified feature difference drives a
channel and a spatial attention map. The product of the two attentions,
A_mismatch, re-weights both streams residually before pooled classification.
"""

from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn as nn

from src.models.config import CmdConfig
from src.models.tafe import gap
from src.types.volume import SEQUENCES
from src.utils.errors import ConfigError, ShapeError

T2_CHANNEL = SEQUENCES.index("T2")
FLAIR_CHANNEL = SEQUENCES.index("FLAIR")


@dataclass
class MismatchFeatures:
    f_t2: torch.Tensor
    f_flair: torch.Tensor
    f_diff: torch.Tensor
    ca: torch.Tensor
    sa: torch.Tensor
    a_mismatch: torch.Tensor
    f_t2_enhanced: torch.Tensor
    f_flair_enhanced: torch.Tensor


def soft_gate(v: torch.Tensor, tumor_prob: torch.Tensor, floor: float) -> torch.Tensor:
    """v * max(tumor_prob, floor), elementwise."""
    if (
        v.ndim != tumor_prob.ndim
        or v.shape[0] != tumor_prob.shape[0]
        or v.shape[2:] != tumor_prob.shape[2:]
        or tumor_prob.shape[1] not in (1, v.shape[1])
    ):
        raise ShapeError(
            f"Cannot gate {tuple(v.shape)} with probability {tuple(tumor_prob.shape)}"
        )
    return v * torch.clamp(tumor_prob, min=floor)


def differential(f_t2: torch.Tensor, f_flair: torch.Tensor, gamma: float) -> torch.Tensor:
    """Amplified feature difference gamma * (F_T2 - F_FLAIR)."""
    if gamma <= 1:
        raise ConfigError(f"gamma must be > 1, got {gamma}")
    if f_t2.shape != f_flair.shape:
        raise ShapeError(f"Feature shapes differ: {tuple(f_t2.shape)} vs {tuple(f_flair.shape)}")
    return gamma * (f_t2 - f_flair)


def gmp(x: torch.Tensor) -> torch.Tensor:
    """Global max pooling: (B, d, *spatial) -> (B, d)."""
    return x.flatten(start_dim=2).amax(dim=2)


class ChannelAttention(nn.Module):
    """sigmoid(MLP(GAP(x)) + MLP(GMP(x))) with one MLP shared by both poolings."""

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(channels, channels // reduction),
            nn.ReLU(),
            nn.Linear(channels // reduction, channels),
        )

    def forward(self, f_diff: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.mlp(gap(f_diff)) + self.mlp(gmp(f_diff)))


class SpatialAttention(nn.Module):
    """Channel mean and max maps -> conv -> ReLU -> 1x1 conv -> sigmoid."""

    def __init__(self, kernel_size: int):
        super().__init__()
        # Replicate padding keeps a spatially constant input constant
        self.conv = nn.Conv3d(2, 2, kernel_size, padding=kernel_size // 2, padding_mode="replicate")
        self.relu = nn.ReLU()
        self.project = nn.Conv3d(2, 1, 1)

    def forward(self, f_diff: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat(
            [f_diff.mean(dim=1, keepdim=True), f_diff.amax(dim=1, keepdim=True)], dim=1
        )
        return torch.sigmoid(self.project(self.relu(self.conv(pooled))))


def apply_mismatch(
    f_t2: torch.Tensor, f_flair: torch.Tensor, ca: torch.Tensor, sa: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Residual re-weighting F' = F * (1 + A) for both streams.

    Args:
        f_t2: (B, c, *s) T2 features
        f_flair: (B, c, *s) FLAIR features
        ca: (B, c) channel attention
        sa: (B, 1, *s) spatial attention

    Returns:
        (F'_T2, F'_FLAIR, A_mismatch)
    """
    ca = ca.reshape(ca.shape + (1,) * (f_t2.ndim - ca.ndim))
    a_mismatch = ca * sa
    return f_t2 * (1 + a_mismatch), f_flair * (1 + a_mismatch), a_mismatch


class CmdStream(nn.Module):
    """Gating, shared conv stack, differential attention and CMD classifier."""

    def __init__(self, cfg: CmdConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.conv_channels
        self.shared_conv = nn.Sequential(
            nn.Conv3d(1, c, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv3d(c, c, 3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.channel_attention = ChannelAttention(c, cfg.reduction)
        self.spatial_attention = SpatialAttention(cfg.spatial_kernel)
        self.head = nn.Sequential(
            nn.Linear(2 * c, cfg.head_hidden),
            nn.ReLU(),
            nn.Linear(cfg.head_hidden, cfg.n_cls),
        )

    def features(self, volumes: torch.Tensor, tumor_prob: torch.Tensor) -> MismatchFeatures:
        """
        Compute the mismatch features of a batch.

        Args:
            volumes: (B, 4, D, H, W) batch in T1, T1C, T2, FLAIR order
            tumor_prob: (B, 1, D, H, W) whole-tumor probability

        Returns:
            MismatchFeatures at 1/4 input resolution
        """
        t2 = soft_gate(volumes[:, T2_CHANNEL : T2_CHANNEL + 1], tumor_prob, self.cfg.floor)
        flair = soft_gate(
            volumes[:, FLAIR_CHANNEL : FLAIR_CHANNEL + 1], tumor_prob, self.cfg.floor
        )
        f_t2 = self.shared_conv(t2)
        f_flair = self.shared_conv(flair)
        f_diff = differential(f_t2, f_flair, self.cfg.gamma)
        ca = self.channel_attention(f_diff)
        sa = self.spatial_attention(f_diff)
        f_t2_enhanced, f_flair_enhanced, a_mismatch = apply_mismatch(f_t2, f_flair, ca, sa)
        return MismatchFeatures(
            f_t2, f_flair, f_diff, ca, sa, a_mismatch, f_t2_enhanced, f_flair_enhanced
        )

    def classify(self, f_t2_enhanced: torch.Tensor, f_flair_enhanced: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([gap(f_t2_enhanced), gap(f_flair_enhanced)], dim=1)
        if pooled.shape[1] != self.head[0].in_features:
            raise ShapeError(
                f"CMD head expects width {self.head[0].in_features}, got {pooled.shape[1]}"
            )
        return self.head(pooled)

    def forward(self, volumes: torch.Tensor, tumor_prob: torch.Tensor) -> torch.Tensor:
        feats = self.features(volumes, tumor_prob)
        return self.classify(feats.f_t2_enhanced, feats.f_flair_enhanced)
