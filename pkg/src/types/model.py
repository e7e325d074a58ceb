"""
Type definitions for the model, training, evaluation and interpret modules.
"""

from typing import Callable, Literal

import torch

BlockKind = Literal["shifted-window-attention", "conv-residual"]

FillPolicy = Literal["zero", "volume-mean"]

InvertMode = Literal["negate", "baseline"]

StdMode = Literal["sample", "population"]

PosthocMethod = Literal["bonferroni", "holm"]

# Anything that maps a (B, 4, D, H, W) batch to (B, n_cls) class probabilities
ProbaFunc = Callable[[torch.Tensor], torch.Tensor]
