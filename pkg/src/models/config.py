"""Configuration for the backbone, TAFE, CMD and fusion heads."""

from typing import Optional, Tuple

from pydantic import Field, model_validator

from src.core.config import StrictModel
from src.types.model import BlockKind

N_STAGES = 4
# Patch embedding halves the input once, then three merges halve it again
PYRAMID_FACTOR = 2**N_STAGES
SEG_CHANNELS = 4


class BackboneConfig(StrictModel):
    """Hierarchical encoder-decoder producing the feature pyramid and segmentation."""

    in_channels: int = Field(4, ge=1)
    embed_dim: int = Field(8, ge=1)
    depths: Tuple[int, int, int, int] = (1, 1, 1, 1)
    num_heads: Tuple[int, int, int, int] = (1, 2, 2, 4)
    window_size: int = Field(4, ge=1)
    input_size: Tuple[int, int, int] = (32, 32, 32)
    block_kind: BlockKind = "shifted-window-attention"
    mlp_ratio: float = Field(4.0, gt=0.0)
    norm_groups: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_shapes(self):
        for extent in self.input_size:
            if extent % PYRAMID_FACTOR:
                raise ValueError(
                    f"input_size {self.input_size} must be divisible by {PYRAMID_FACTOR}"
                )
        if self.embed_dim < max(self.num_heads):
            raise ValueError(
                f"embed_dim {self.embed_dim} must be >= num_heads {self.num_heads}"
            )
        for i, heads in enumerate(self.num_heads):
            width = self.stage_channels[i]
            if width % heads:
                raise ValueError(f"Stage {i + 1} width {width} not divisible by {heads} heads")
        if min(self.depths) < 1:
            raise ValueError("depths must be >= 1")
        return self

    @property
    def stage_channels(self) -> Tuple[int, ...]:
        return tuple(self.embed_dim * 2**i for i in range(N_STAGES))

    @property
    def stage_sizes(self) -> Tuple[Tuple[int, int, int], ...]:
        return tuple(
            tuple(extent // 2 ** (i + 1) for extent in self.input_size)
            for i in range(N_STAGES)
        )


class TafeConfig(StrictModel):
    """Tumor-aware feature encoding head."""

    depth: int = Field(1, ge=1, le=N_STAGES)
    head_hidden: int = Field(64, ge=1)
    n_cls: int = Field(2, ge=1)
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)


class CmdConfig(StrictModel):
    """Cross-modality differential stream."""

    gamma: float = Field(2.0, gt=1.0)
    floor: float = Field(0.1, ge=0.0, lt=1.0)
    conv_channels: int = Field(16, ge=1)
    reduction: int = Field(4, ge=1)
    spatial_kernel: int = Field(7, ge=1)
    head_hidden: int = Field(32, ge=1)
    n_cls: int = Field(2, ge=1)

    @model_validator(mode="after")
    def _check_widths(self):
        if self.conv_channels % self.reduction:
            raise ValueError(
                f"reduction {self.reduction} must divide conv_channels {self.conv_channels}"
            )
        if self.spatial_kernel % 2 == 0:
            raise ValueError("spatial_kernel must be odd")
        return self


class FusionConfig(StrictModel):
    """Dual-stream fusion MLP over concatenated stream logits."""

    hidden: int = Field(16, ge=1)


class ModuleSwitches(StrictModel):
    """Which classification streams run and whether segmentation is supervised."""

    tafe_on: bool = True
    cmd_on: bool = True
    # Overrides tafe.depth when set (ablation grids)
    tafe_depth: Optional[int] = Field(None, ge=1, le=N_STAGES)
    seg_supervision_on: bool = True

    @model_validator(mode="after")
    def _check_streams(self):
        if not (self.tafe_on or self.cmd_on):
            raise ValueError("At least one of tafe_on and cmd_on must be true")
        return self


class ArchitectureConfig(StrictModel):
    """Everything that determines the network's parameter set."""

    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    tafe: TafeConfig = Field(default_factory=TafeConfig)
    cmd: CmdConfig = Field(default_factory=CmdConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    tafe_on: bool = True
    cmd_on: bool = True

    @model_validator(mode="after")
    def _check_classes(self):
        if self.tafe.n_cls != self.cmd.n_cls:
            raise ValueError(
                f"tafe.n_cls {self.tafe.n_cls} and cmd.n_cls {self.cmd.n_cls} must match"
            )
        return self

    @property
    def n_cls(self) -> int:
        return self.tafe.n_cls
