"""Configuration for occlusion saliency and overlays."""

from typing import Optional

from pydantic import Field, model_validator

from src.core.config import StrictModel
from src.types.model import FillPolicy, InvertMode


class OcclusionConfig(StrictModel):
    """Sliding-cube occlusion settings."""

    mask_size: int = Field(16, ge=1)
    overlap: float = Field(0.5, ge=0.0, lt=1.0)
    fill_policy: FillPolicy = "zero"
    smooth_sigma: float = Field(1.0, ge=0.0)
    invert: InvertMode = "negate"
    batch_size: int = Field(8, ge=1)
    # Overlay settings
    sequence: str = "FLAIR"
    slice_index: Optional[int] = None
    alpha: float = Field(0.5, ge=0.0, le=1.0)
    colormap: str = "jet"

    @model_validator(mode="after")
    def _check_stride(self):
        if self.stride < 1:
            raise ValueError(
                f"mask_size {self.mask_size} with overlap {self.overlap} gives stride < 1"
            )
        return self

    @property
    def stride(self) -> int:
        """Window step, truncated like MONAI's sliding-window scan interval."""
        return int(self.mask_size * (1.0 - self.overlap))
