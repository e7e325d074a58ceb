"""Configuration for losses, augmentation and training."""

from typing import Any, Dict, List, Optional, Tuple

from pydantic import Field, model_validator

from src.core.config import StrictModel
from src.models.config import ModuleSwitches


class LossConfig(StrictModel):
    """Weights of the joint objective alpha * L_seg + beta * L_cla."""

    alpha: float = Field(0.5, ge=0.0)
    beta: float = Field(1.0, ge=0.0)
    dice_smooth: float = Field(1e-5, gt=0.0)
    class_weights: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_weights(self):
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be > 0")
        if self.class_weights is not None and min(self.class_weights) < 0:
            raise ValueError("class_weights must be non-negative")
        return self


class AugmentConfig(StrictModel):
    flip: bool = True
    flip_prob: float = Field(0.5, ge=0.0, le=1.0)
    rotate: bool = True
    intensity_scale: bool = True
    scale_range: Tuple[float, float] = (0.9, 1.1)

    @model_validator(mode="after")
    def _check_range(self):
        low, high = self.scale_range
        if not 0 < low <= high:
            raise ValueError(f"scale_range {self.scale_range} must satisfy 0 < low <= high")
        return self


class TrainConfig(StrictModel):
    """Optimization, early stopping and cross-validation settings."""

    max_epochs: int = Field(100, ge=1)
    batch_size: int = Field(2, ge=1)
    learning_rate: float = Field(1e-4, gt=0.0)
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0.0)
    patience: int = Field(5, ge=1)
    seed: int = 0
    folds: int = Field(5, ge=2)
    # Oversample the minority class to a 1:1 epoch composition
    balance_classes: bool = True
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    modules: ModuleSwitches = Field(default_factory=ModuleSwitches)
    init_checkpoint: Optional[str] = None
    eval_batch_size: int = Field(4, ge=1)


class AblationCell(StrictModel):
    """One ablation row: a name and dotted-key overrides of the run config."""

    name: str
    overrides: Dict[str, Any] = Field(default_factory=dict)


class AblationConfig(StrictModel):
    grid: List[AblationCell] = Field(default_factory=list)
    # Seed ladder shared by every cell
    seeds: List[int] = Field(default_factory=lambda: [0])
