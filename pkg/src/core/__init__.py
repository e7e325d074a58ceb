"""
Core data functionality.

This module provides the case bundle format, manifests, preprocessing and the
synthetic phantom generator.
"""

from src.core.phantom import generate_dataset, generate_phantom, mismatch_oracle
from src.core.preprocessing import crop_fixed, zscore_normalize
from src.core.volume_io import (
    Case,
    Manifest,
    Volume,
    load_case,
    load_manifest,
    write_case,
    write_manifest,
)

__all__ = [
    "Case",
    "Manifest",
    "Volume",
    "load_case",
    "load_manifest",
    "write_case",
    "write_manifest",
    "crop_fixed",
    "zscore_normalize",
    "generate_dataset",
    "generate_phantom",
    "mismatch_oracle",
]
