"""Slice overlays of saliency on anatomy, and volume dumps for inspection."""

from pathlib import Path
from typing import Optional, Union

import matplotlib
import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from src.core.volume_io import Case, Volume, write_volume_bundle
from src.models.network import IdhMultiTaskNet
from src.types.volume import SEQUENCES
from src.utils.errors import MissingSequence, ShapeError, WriteError
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)

SALIENCY_NAME = "saliency"
MISMATCH_NAME = "a_mismatch"


def normalize_slice(image: np.ndarray) -> np.ndarray:
    """Min-max scale a 2D slice to [0, 1]; constant slices become zeros."""
    image = np.asarray(image, dtype=np.float64)
    span = np.ptp(image)
    if span <= 1e-12:
        return np.zeros_like(image)
    return (image - image.min()) / span


def default_slice(case: Case, saliency: np.ndarray) -> int:
    """Axial slice with the most tumor voxels, else the most saliency."""
    mask = case.mask_array()
    if mask is not None and mask.any():
        return int((mask > 0).sum(axis=(1, 2)).argmax())
    return int(saliency.sum(axis=(1, 2)).argmax())


def blend_overlay(
    anatomy: np.ndarray, saliency: np.ndarray, alpha: float, colormap: str = "jet"
) -> np.ndarray:
    """
    Alpha-blend a color-mapped saliency slice over a grayscale anatomy slice.

    The per-pixel blend weight is alpha * saliency, so zero saliency leaves the
    grayscale render untouched.

    Returns:
        (H, W, 3) uint8 RGB image
    """
    gray = normalize_slice(anatomy)[..., None].repeat(3, axis=2)
    s = np.clip(np.asarray(saliency, dtype=np.float64), 0.0, 1.0)
    color = matplotlib.colormaps[colormap](s)[..., :3]
    weight = (alpha * s)[..., None]
    rgb = (1.0 - weight) * gray + weight * color
    return np.round(rgb * 255.0).astype(np.uint8)


def export_overlay(
    saliency: np.ndarray,
    case: Case,
    sequence: str,
    slice_index: Optional[int],
    out_path: Union[str, Path],
    alpha: float = 0.5,
    colormap: str = "jet",
) -> Path:
    """
    Write an overlay PNG and the saliency volume as a bundle beside it.

    Args:
        saliency: (D, H, W) saliency in [0, 1]
        case: Case providing the anatomical sequence
        sequence: Sequence name drawn in grayscale
        slice_index: Axial index in [0, D); None picks default_slice
        out_path: PNG path; the bundle goes to <parent>/saliency
        alpha: Maximum overlay opacity
        colormap: matplotlib colormap name

    Returns:
        The PNG path
    """
    saliency = np.asarray(saliency, dtype=np.float32)
    if saliency.shape != case.dims:
        raise ShapeError(f"Saliency {saliency.shape} does not match case dims {case.dims}")
    if sequence not in SEQUENCES or sequence not in case.sequences:
        raise MissingSequence(f"Case {case.id} has no sequence {sequence!r}")
    if slice_index is None:
        slice_index = default_slice(case, saliency)
    depth = case.dims[0]
    if not 0 <= slice_index < depth:
        raise IndexError(f"slice_index {slice_index} outside [0, {depth})")

    anatomy = case.sequences[sequence].voxels[slice_index]
    rgb = blend_overlay(anatomy, saliency[slice_index], alpha, colormap)
    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(rgb).save(out_path, format="PNG")
    except OSError as e:
        raise WriteError(f"Failed to write overlay {out_path}: {e}") from e
    write_volume_bundle(
        Volume(saliency, case.spacing), out_path.parent / SALIENCY_NAME, SALIENCY_NAME
    )
    logger.info(f"Wrote overlay {out_path} ({sequence}, slice {slice_index})")
    return out_path


def mismatch_map(model: IdhMultiTaskNet, case: Case) -> np.ndarray:
    """Channel-mean A_mismatch of a prepared case, upsampled to the input grid."""
    device = next(model.parameters()).device
    x = torch.from_numpy(case.stack()[None]).to(device)
    was_training = model.training
    model.eval()
    try:
        features = model.mismatch_features(x)
    finally:
        model.train(was_training)
    attention = features.a_mismatch.mean(dim=1, keepdim=True)
    upsampled = F.interpolate(attention, size=case.dims, mode="trilinear", align_corners=False)
    return upsampled[0, 0].cpu().numpy().astype(np.float32)


def export_mismatch_map(
    model: IdhMultiTaskNet, case: Case, out_dir: Union[str, Path]
) -> Path:
    """Write the upsampled A_mismatch map as an a_mismatch bundle under out_dir."""
    volume = Volume(mismatch_map(model, case), case.spacing)
    return write_volume_bundle(volume, Path(out_dir) / MISMATCH_NAME, MISMATCH_NAME)
