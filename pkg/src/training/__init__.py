"""
Training: losses, augmentation, single-fold training, cross-validation,
ensembling and ablation grids.

The trainer modules depend on src.config, which itself imports the training
configs, so only the config-free pieces are re-exported here.
"""

from src.training.augment import augment, flip_case
from src.training.config import AblationCell, LossConfig, TrainConfig
from src.training.losses import LossTerms, dice_loss, total_loss

__all__ = [
    "augment",
    "flip_case",
    "AblationCell",
    "LossConfig",
    "TrainConfig",
    "LossTerms",
    "dice_loss",
    "total_loss",
]
