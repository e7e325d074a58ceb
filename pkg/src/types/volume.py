"""
Type definitions for the volume-io and phantom modules.
"""

from typing import Literal, Tuple

# Sequence names in canonical channel order
SequenceName = Literal["T1", "T1C", "T2", "FLAIR"]
SEQUENCES: Tuple[SequenceName, ...] = ("T1", "T1C", "T2", "FLAIR")

SplitTag = Literal["train", "val", "test", "unassigned"]
SPLIT_TAGS: Tuple[SplitTag, ...] = ("train", "val", "test", "unassigned")

NormRegion = Literal["all-voxels", "nonzero-voxels"]

Dims = Tuple[int, int, int]
Spacing = Tuple[float, float, float]

# Mask labels: 0 background, 1 core, 2 rim, 3 edema
MASK_LABELS = (0, 1, 2, 3)
