"""
Hierarchical encoder-decoder backbone.

The encoder embeds 2x2x2 patches and runs four stages, each halving the
spatial extent and doubling the channel width, so stage i outputs
embed_dim * 2^(i-1) channels at input / 2^i. Stages are shifted-window
attention layers or, for the interchangeable fallback, strided residual
convolutions. The decoder upsamples from the deepest stage with skips to the
shallower stages and a full-resolution stem, ending in 4 segmentation logits.
"""

from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn as nn
from einops import rearrange
from monai.networks.blocks import PatchEmbed, UnetOutBlock, UnetrBasicBlock, UnetrUpBlock
from monai.networks.blocks.dynunet_block import UnetResBlock
from monai.networks.nets.swin_unetr import BasicLayer, PatchMergingV2

from src.models.config import N_STAGES, SEG_CHANNELS, BackboneConfig
from src.utils.errors import ShapeError
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)


@dataclass
class FeaturePyramid:
    """Encoder stage outputs x1..x4, shallowest first."""

    stages: Tuple[torch.Tensor, ...]

    def __getitem__(self, index: int) -> torch.Tensor:
        return self.stages[index]

    def __len__(self) -> int:
        return len(self.stages)

    def deepest(self, k: int) -> Tuple[torch.Tensor, ...]:
        """The deepest k stages, deepest last."""
        return self.stages[len(self.stages) - k :]


@dataclass
class SegOutput:
    logits: torch.Tensor
    tumor_prob: torch.Tensor


def tumor_probability(logits: torch.Tensor) -> torch.Tensor:
    """Whole-tumor probability: one minus the softmax background channel."""
    return 1.0 - torch.softmax(logits, dim=1)[:, 0:1]


def _norm(cfg: BackboneConfig):
    # Group norm stays defined on 1-voxel maps where instance norm does not
    return ("group", {"num_groups": cfg.norm_groups})


class SwinStage(nn.Module):
    """Optional patch merging followed by a shifted-window attention layer."""

    def __init__(self, cfg: BackboneConfig, index: int):
        super().__init__()
        width = cfg.stage_channels[index]
        self.merge = (
            PatchMergingV2(dim=width // 2, norm_layer=nn.LayerNorm, spatial_dims=3)
            if index > 0
            else None
        )
        self.layer = BasicLayer(
            dim=width,
            depth=cfg.depths[index],
            num_heads=cfg.num_heads[index],
            window_size=(cfg.window_size,) * 3,
            drop_path=[0.0] * cfg.depths[index],
            mlp_ratio=cfg.mlp_ratio,
            qkv_bias=True,
            norm_layer=nn.LayerNorm,
            downsample=None,
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.merge is not None:
            x = rearrange(x, "b c d h w -> b d h w c")
            x = self.merge(x)
            x = rearrange(x, "b d h w c -> b c d h w")
        return self.layer(x.contiguous())


class Backbone(nn.Module):
    """Encoder producing a FeaturePyramid plus the segmentation decoder."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        channels = cfg.stage_channels
        norm = _norm(cfg)

        if cfg.block_kind == "shifted-window-attention":
            self.patch_embed = PatchEmbed(
                patch_size=2,
                in_chans=cfg.in_channels,
                embed_dim=cfg.embed_dim,
                norm_layer=None,
                spatial_dims=3,
            )
            self.stages = nn.ModuleList(SwinStage(cfg, i) for i in range(N_STAGES))
        else:
            self.patch_embed = None
            in_widths = (cfg.in_channels,) + channels[:-1]
            self.stages = nn.ModuleList(
                UnetResBlock(3, in_widths[i], channels[i], kernel_size=3, stride=2, norm_name=norm)
                for i in range(N_STAGES)
            )

        self.stem = UnetrBasicBlock(
            3,
            cfg.in_channels,
            cfg.embed_dim,
            kernel_size=3,
            stride=1,
            norm_name=norm,
            res_block=True,
        )
        # Up blocks from x4 with skips x3, x2, x1, then the stem
        up_pairs = [(channels[i], channels[i - 1]) for i in range(N_STAGES - 1, 0, -1)]
        up_pairs.append((channels[0], cfg.embed_dim))
        self.up_blocks = nn.ModuleList(
            UnetrUpBlock(
                3,
                in_ch,
                out_ch,
                kernel_size=3,
                upsample_kernel_size=2,
                norm_name=norm,
                res_block=True,
            )
            for in_ch, out_ch in up_pairs
        )
        self.seg_head = UnetOutBlock(3, cfg.embed_dim, SEG_CHANNELS)
        self.apply(_init_weights)

    def check_input(self, x: torch.Tensor) -> None:
        expected = (self.cfg.in_channels,) + tuple(self.cfg.input_size)
        if x.ndim != 5 or tuple(x.shape[1:]) != expected:
            raise ShapeError(f"Backbone expects (B, {expected}), got {tuple(x.shape)}")

    def encode(self, x: torch.Tensor) -> FeaturePyramid:
        """
        Run the encoder.

        Args:
            x: (B, in_channels, D, H, W) batch matching cfg.input_size

        Returns:
            FeaturePyramid with stage i at embed_dim * 2^(i-1) channels
        """
        self.check_input(x)
        stages = []
        h = self.patch_embed(x) if self.patch_embed is not None else x
        for stage in self.stages:
            h = stage(h)
            stages.append(h)
        return FeaturePyramid(tuple(stages))

    def check_pyramid(self, pyramid: FeaturePyramid) -> None:
        if len(pyramid) != N_STAGES:
            raise ShapeError(f"Pyramid has {len(pyramid)} stages, expected {N_STAGES}")
        for i, (x, width, size) in enumerate(
            zip(pyramid.stages, self.cfg.stage_channels, self.cfg.stage_sizes)
        ):
            if x.shape[1] != width or tuple(x.shape[2:]) != size:
                raise ShapeError(
                    f"Stage x{i + 1} has shape {tuple(x.shape[1:])}, "
                    f"expected ({width}, {size})"
                )

    def decode_segment(self, pyramid: FeaturePyramid, skip: torch.Tensor) -> SegOutput:
        """
        Decode segmentation logits at input resolution.

        Args:
            pyramid: Output of encode on the same config
            skip: The raw input batch, fed through the full-resolution stem

        Returns:
            SegOutput with 4-channel logits and the whole-tumor probability
        """
        self.check_pyramid(pyramid)
        self.check_input(skip)
        h = pyramid.stages[-1]
        for block, skip_features in zip(self.up_blocks[:-1], reversed(pyramid.stages[:-1])):
            h = block(h, skip_features)
        h = self.up_blocks[-1](h, self.stem(skip))
        logits = self.seg_head(h)
        return SegOutput(logits=logits, tumor_prob=tumor_probability(logits))

    def forward(self, x: torch.Tensor) -> Tuple[FeaturePyramid, SegOutput]:
        pyramid = self.encode(x)
        return pyramid, self.decode_segment(pyramid, x)


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)
