"""
In-pipeline preprocessing: z-score normalization and fixed-size cropping.
"""

from typing import Tuple

import numpy as np

from src.core.volume_io import Case, Volume
from src.types.volume import Dims, NormRegion
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)

ZERO_STD = 1e-8


def zscore_normalize(v: Volume, region: NormRegion = "nonzero-voxels") -> Volume:
    """
    Z-score a volume with statistics taken over a region.

    Mean and population standard deviation are computed over the region; every
    voxel, inside the region or not, maps to (value - mean) / std. A standard
    deviation below 1e-8, or an empty region, gives an all-zero volume.

    Only "all-voxels" mode is idempotent. In "nonzero-voxels" mode a zero
    background maps to -mean / std, so a second pass takes its statistics
    over every voxel and re-standardizes the background too.

    Args:
        v: Input volume
        region: "all-voxels" or "nonzero-voxels"

    Returns:
        Normalized volume with the same dims and spacing
    """
    data = v.voxels.astype(np.float64)
    selected = data if region == "all-voxels" else data[data != 0]
    if selected.size == 0:
        return Volume(np.zeros_like(v.voxels), v.spacing)

    mu = selected.mean()
    s = selected.std()
    if s < ZERO_STD:
        return Volume(np.zeros_like(v.voxels), v.spacing)
    return Volume(((data - mu) / s).astype(np.float32), v.spacing)


def crop_window(dims: Dims, size: Dims, center: Tuple[float, float, float]):
    """Start index per axis for a window of `size` centered at `center`, clamped."""
    starts = []
    for dim, length, c in zip(dims, size, center):
        start = int(np.floor(c - length / 2 + 0.5))
        starts.append(min(max(start, 0), dim - length))
    return tuple(starts)


def _pad_to(array: np.ndarray, size: Dims) -> np.ndarray:
    pads = []
    for dim, length in zip(array.shape, size):
        total = max(length - dim, 0)
        pads.append((total // 2, total - total // 2))
    if not any(p for pair in pads for p in pair):
        return array
    return np.pad(array, pads, mode="constant", constant_values=0)


def crop_fixed(case: Case, size: Dims) -> Case:
    """
    Crop every volume of a case to a fixed size.

    The window centers on the centroid of the nonzero mask voxels when a
    nonempty mask exists, else on the volume center, and is clamped to lie
    inside the volume. Axes shorter than the crop are zero-padded
    symmetrically first.

    Args:
        case: Case to crop
        size: Target (d, h, w)

    Returns:
        Cropped case; the same window is applied to all sequences and the mask
    """
    size = tuple(int(s) for s in size)
    sequences = {name: _pad_to(v.voxels, size) for name, v in case.sequences.items()}
    mask = None if case.mask is None else _pad_to(case.mask.voxels, size)
    dims = next(iter(sequences.values())).shape

    if mask is not None and mask.any():
        center = tuple(float(c) for c in np.argwhere(mask > 0).mean(axis=0))
    else:
        center = tuple(d / 2 for d in dims)
    start = crop_window(dims, size, center)
    window = tuple(slice(s, s + length) for s, length in zip(start, size))
    logger.debug(f"Cropping case {case.id} at {start} with size {size}")

    spacing = case.spacing
    cropped = {name: Volume(arr[window].copy(), spacing) for name, arr in sequences.items()}
    cropped_mask = None if mask is None else Volume(mask[window].copy(), spacing)
    return Case(case.id, cropped, cropped_mask, case.idh_label)


def preprocess_case(
    case: Case, size: Dims, region: NormRegion = "nonzero-voxels"
) -> Case:
    """Crop a case to `size` then z-score every sequence."""
    cropped = crop_fixed(case, size) if tuple(size) != case.dims else case
    normalized = {
        name: zscore_normalize(v, region) for name, v in cropped.sequences.items()
    }
    return Case(cropped.id, normalized, cropped.mask, cropped.idh_label)
