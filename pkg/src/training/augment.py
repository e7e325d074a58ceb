"""
Online augmentation: axis flips, right-angle rotations and global intensity
scaling. Geometric transforms act identically on every sequence and the mask.
"""

from itertools import combinations
from typing import Optional, Sequence, Tuple

import numpy as np

from src.core.volume_io import Case, case_from_arrays
from src.training.config import AugmentConfig


def rotation_planes(dims: Sequence[int]) -> Tuple[Tuple[int, int], ...]:
    """Axis pairs whose extents match, so a quarter turn keeps the shape."""
    return tuple((a, b) for a, b in combinations(range(3), 2) if dims[a] == dims[b])


def augment_arrays(
    volumes: np.ndarray,
    mask: Optional[np.ndarray],
    rng: np.random.Generator,
    cfg: AugmentConfig,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Augment a (4, D, H, W) volume stack and its (D, H, W) mask.

    Args:
        volumes: Sequence stack
        mask: Label volume or None
        rng: Generator that decides every random choice
        cfg: Which transforms are enabled and their ranges

    Returns:
        Augmented (volumes, mask)
    """
    if cfg.flip:
        for axis in range(3):
            if rng.random() < cfg.flip_prob:
                volumes = np.flip(volumes, axis=axis + 1)
                mask = None if mask is None else np.flip(mask, axis=axis)

    planes = rotation_planes(volumes.shape[1:])
    if cfg.rotate and planes:
        k = int(rng.integers(0, 4))
        a, b = planes[int(rng.integers(0, len(planes)))]
        if k:
            volumes = np.rot90(volumes, k=k, axes=(a + 1, b + 1))
            mask = None if mask is None else np.rot90(mask, k=k, axes=(a, b))

    volumes = np.ascontiguousarray(volumes, dtype=np.float32)
    if cfg.intensity_scale:
        volumes = volumes * np.float32(rng.uniform(*cfg.scale_range))
    mask = None if mask is None else np.ascontiguousarray(mask)
    return volumes, mask


def augment(case: Case, rng: np.random.Generator, cfg: AugmentConfig) -> Case:
    volumes, mask = augment_arrays(case.stack(), case.mask_array(), rng, cfg)
    return case_from_arrays(case.id, volumes, mask, case.idh_label, case.spacing)


def flip_case(case: Case, axis: int) -> Case:
    """Flip every volume of a case along one spatial axis."""
    volumes = np.flip(case.stack(), axis=axis + 1)
    mask = case.mask_array()
    mask = None if mask is None else np.flip(mask, axis=axis)
    volumes = np.ascontiguousarray(volumes)
    return case_from_arrays(case.id, volumes, mask, case.idh_label, case.spacing)
