"""Configuration for case data and the phantom generator."""

from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.types.volume import NormRegion


class StrictModel(BaseModel):
    """Base for every config section: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class PhantomDatasetConfig(StrictModel):
    """Parameters of a synthetic phantom dataset."""

    n_cases: int = Field(20, ge=2)
    mutant_fraction: float = Field(0.3, gt=0.0, lt=1.0)
    dims: Tuple[int, int, int] = (32, 32, 32)
    # Per-axis ellipsoid radius range (voxels)
    radius_range: Tuple[float, float] = (5.0, 7.0)
    mismatch_contrast_range: Tuple[float, float] = (0.6, 0.9)
    noise_sigma_range: Tuple[float, float] = (0.1, 0.2)
    boundary_sharpness_range: Tuple[float, float] = (1.5, 3.0)
    rim_thickness_range: Tuple[float, float] = (1.0, 2.0)
    # Fraction of each class tagged "test"; the rest are tagged "train"
    test_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    master_seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self):
        for name in (
            "radius_range",
            "mismatch_contrast_range",
            "noise_sigma_range",
            "boundary_sharpness_range",
            "rim_thickness_range",
        ):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name} has low {low} > high {high}")
        if self.radius_range[0] < 2.0:
            raise ValueError("radius_range must start at 2 voxels or more")
        if self.mismatch_contrast_range[0] <= 0.0:
            raise ValueError("mismatch_contrast_range must be positive")
        if self.noise_sigma_range[0] < 0.0:
            raise ValueError("noise_sigma_range must be non-negative")
        if self.rim_thickness_range[1] >= self.radius_range[0]:
            raise ValueError("rim_thickness_range must stay below the smallest radius")
        if min(self.dims) < 1:
            raise ValueError("dims must be positive")
        return self


class DataConfig(StrictModel):
    """Where cases come from and how they are preprocessed."""

    manifest: Optional[str] = None
    # None crops to backbone.input_size
    crop_size: Optional[Tuple[int, int, int]] = None
    norm_region: NormRegion = "nonzero-voxels"
    phantom: PhantomDatasetConfig = Field(default_factory=PhantomDatasetConfig)
