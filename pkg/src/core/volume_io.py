"""
Case bundles and manifests.

A case bundle is a directory holding ``header.json`` plus one little-endian
float32 raw file per sequence (``t1.raw``, ``t1c.raw``, ``t2.raw``,
``flair.raw``) in C order [z][y][x], and an optional unsigned 8-bit
``mask.raw``. A manifest is a CSV ``case_id,bundle_path,idh_label,split_tag``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.types.volume import MASK_LABELS, SEQUENCES, SPLIT_TAGS, Dims, Spacing
from src.utils.errors import (
    CorruptBundle,
    DataError,
    DuplicateCase,
    InvalidLabel,
    InvalidMask,
    MissingSequence,
    WriteError,
)
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)

HEADER_FILE = "header.json"
MASK_FILE = "mask.raw"
FLOAT_DTYPE = np.dtype("<f4")
MASK_DTYPE = np.dtype("u1")
MANIFEST_COLUMNS = ["case_id", "bundle_path", "idh_label", "split_tag"]


def raw_name(sequence: str) -> str:
    return f"{sequence.lower()}.raw"


@dataclass
class Volume:
    """A dense scalar grid with its voxel spacing."""

    voxels: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.voxels.ndim != 3 or min(self.voxels.shape) < 1:
            raise DataError(f"Volume must be 3-D and non-empty, got {self.voxels.shape}")
        if self.voxels.dtype.kind == "f":
            self.voxels = np.ascontiguousarray(self.voxels, dtype=np.float32)
            if not np.isfinite(self.voxels).all():
                raise DataError("Volume contains non-finite values")
        self.spacing = tuple(float(s) for s in self.spacing)

    @property
    def dims(self) -> Dims:
        return tuple(int(d) for d in self.voxels.shape)


@dataclass
class Case:
    """One subject: four co-registered sequences, optional mask and label."""

    id: str
    sequences: Dict[str, Volume]
    mask: Optional[Volume] = None
    idh_label: Optional[int] = None

    def __post_init__(self):
        dims = {v.dims for v in self.sequences.values()}
        if self.mask is not None:
            dims.add(self.mask.dims)
            check_mask_labels(self.mask.voxels, self.id)
            self.mask = Volume(self.mask.voxels.astype(np.uint8), self.mask.spacing)
        if len(dims) > 1:
            raise DataError(f"Case {self.id} has volumes of differing dims: {dims}")
        if self.idh_label is not None and self.idh_label not in (0, 1):
            raise InvalidLabel(f"Case {self.id} has IDH label {self.idh_label}")

    @property
    def dims(self) -> Dims:
        return next(iter(self.sequences.values())).dims

    @property
    def spacing(self) -> Spacing:
        return next(iter(self.sequences.values())).spacing

    def stack(self) -> np.ndarray:
        """Sequences stacked in canonical order as a (4, D, H, W) float32 array."""
        missing = [s for s in SEQUENCES if s not in self.sequences]
        if missing:
            raise MissingSequence(f"Case {self.id} lacks {missing}")
        return np.stack([self.sequences[s].voxels for s in SEQUENCES]).astype(
            np.float32
        )

    def mask_array(self) -> Optional[np.ndarray]:
        return None if self.mask is None else self.mask.voxels


def check_mask_labels(mask: np.ndarray, case_id: str = "") -> None:
    unknown = np.setdiff1d(np.unique(mask), MASK_LABELS)
    if unknown.size:
        raise InvalidMask(f"Case {case_id} mask has unknown labels {unknown.tolist()}")


def case_from_arrays(
    case_id: str,
    stacked: np.ndarray,
    mask: Optional[np.ndarray] = None,
    idh_label: Optional[int] = None,
    spacing: Spacing = (1.0, 1.0, 1.0),
) -> Case:
    """Build a Case from a (4, D, H, W) array in canonical sequence order."""
    sequences = {name: Volume(stacked[i], spacing) for i, name in enumerate(SEQUENCES)}
    mask_volume = None if mask is None else Volume(np.asarray(mask), spacing)
    return Case(case_id, sequences, mask_volume, idh_label)


def _read_raw(path: Path, dims: Dims, dtype: np.dtype) -> np.ndarray:
    expected = int(np.prod(dims)) * dtype.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise CorruptBundle(
            f"{path} holds {actual} bytes, expected {expected} for dims {dims}"
        )
    return np.fromfile(path, dtype=dtype).reshape(dims)


def load_case(bundle_path: Union[str, Path]) -> Case:
    """
    Load a case bundle from disk.

    Args:
        bundle_path: Directory containing header.json and raw files

    Returns:
        The decoded Case
    """
    bundle = Path(bundle_path)
    header_path = bundle / HEADER_FILE
    if not header_path.is_file():
        raise CorruptBundle(f"No {HEADER_FILE} in {bundle}")
    try:
        with open(header_path, "r", encoding="utf-8") as f:
            header = json.load(f)
        dims = tuple(int(d) for d in header["dims"])
        spacing = tuple(float(s) for s in header.get("spacing", (1.0, 1.0, 1.0)))
        case_id = str(header["id"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptBundle(f"Malformed header in {bundle}: {e}") from e
    if len(dims) != 3 or min(dims) < 1:
        raise CorruptBundle(f"Header dims {dims} in {bundle} are not 3 positive ints")

    sequences = {}
    for name in SEQUENCES:
        path = bundle / raw_name(name)
        if not path.is_file():
            raise MissingSequence(f"Bundle {bundle} is missing {path.name}")
        voxels = _read_raw(path, dims, FLOAT_DTYPE)
        if not np.isfinite(voxels).all():
            raise CorruptBundle(f"{path} contains non-finite values")
        sequences[name] = Volume(voxels, spacing)

    mask = None
    mask_path = bundle / MASK_FILE
    if header.get("has_mask", False):
        if not mask_path.is_file():
            raise CorruptBundle(f"Header of {bundle} declares a mask but none exists")
        mask_voxels = _read_raw(mask_path, dims, MASK_DTYPE)
        check_mask_labels(mask_voxels, case_id)
        mask = Volume(mask_voxels, spacing)

    label = header.get("idh_label")
    if label is not None and label not in (0, 1):
        raise InvalidLabel(f"Bundle {bundle} has IDH label {label!r}")

    logger.debug(f"Loaded case {case_id} from {bundle} with dims {dims}")
    return Case(case_id, sequences, mask, label)


def write_case(case: Case, bundle_path: Union[str, Path]) -> Path:
    """
    Write a Case as a bundle directory.

    Args:
        case: Case to write
        bundle_path: Target directory (created if needed)

    Returns:
        The bundle directory
    """
    bundle = Path(bundle_path)
    header = {
        "id": case.id,
        "dims": list(case.dims),
        "spacing": list(case.spacing),
        "sequences": [s for s in SEQUENCES if s in case.sequences],
        "has_mask": case.mask is not None,
        "idh_label": case.idh_label,
    }
    try:
        bundle.mkdir(parents=True, exist_ok=True)
        for name, volume in case.sequences.items():
            volume.voxels.astype(FLOAT_DTYPE).tofile(bundle / raw_name(name))
        if case.mask is not None:
            case.mask.voxels.astype(MASK_DTYPE).tofile(bundle / MASK_FILE)
        with open(bundle / HEADER_FILE, "w", encoding="utf-8") as f:
            json.dump(header, f, indent=2)
    except OSError as e:
        raise WriteError(f"Failed to write bundle {bundle}: {e}") from e
    return bundle


def write_volume_bundle(
    volume: Volume, out_dir: Union[str, Path], name: str
) -> Path:
    """
    Write a single named volume in the bundle raw format.

    Used for saliency maps and attention dumps, whose header lists the one
    sequence name and has no mask or label.
    """
    out = Path(out_dir)
    header = {
        "id": name,
        "dims": list(volume.dims),
        "spacing": list(volume.spacing),
        "sequences": [name],
        "has_mask": False,
        "idh_label": None,
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        volume.voxels.astype(FLOAT_DTYPE).tofile(out / raw_name(name))
        with open(out / HEADER_FILE, "w", encoding="utf-8") as f:
            json.dump(header, f, indent=2)
    except OSError as e:
        raise WriteError(f"Failed to write volume bundle {out}: {e}") from e
    return out / raw_name(name)


def read_volume_bundle(out_dir: Union[str, Path], name: str) -> Volume:
    bundle = Path(out_dir)
    with open(bundle / HEADER_FILE, "r", encoding="utf-8") as f:
        header = json.load(f)
    dims = tuple(int(d) for d in header["dims"])
    voxels = _read_raw(bundle / raw_name(name), dims, FLOAT_DTYPE)
    return Volume(voxels, tuple(header.get("spacing", (1.0, 1.0, 1.0))))


@dataclass
class ManifestRow:
    case_id: str
    bundle_path: str
    idh_label: Optional[int]
    split_tag: str = "unassigned"


@dataclass
class Manifest:
    """Rows of (case_id, bundle_path, idh_label, split_tag)."""

    rows: List[ManifestRow] = field(default_factory=list)
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            if row.case_id in seen:
                raise DuplicateCase(f"Duplicate case_id {row.case_id!r} in manifest")
            seen.add(row.case_id)
            if row.split_tag not in SPLIT_TAGS:
                raise DataError(
                    f"Case {row.case_id} has split_tag {row.split_tag!r}, "
                    f"expected one of {SPLIT_TAGS}"
                )

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ManifestRow]:
        return iter(self.rows)

    @property
    def case_ids(self) -> List[str]:
        return [row.case_id for row in self.rows]

    @property
    def labels(self) -> List[Optional[int]]:
        return [row.idh_label for row in self.rows]

    def resolve(self, row: ManifestRow) -> Path:
        """Bundle path of a row, relative paths taken from the manifest's directory."""
        path = Path(row.bundle_path)
        return path if path.is_absolute() else self.root / path

    def subset(self, keep: List[ManifestRow]) -> "Manifest":
        return Manifest(list(keep), self.root)

    def split(self, exclude: Tuple[str, ...]) -> "Manifest":
        return self.subset([r for r in self.rows if r.split_tag not in exclude])

    def with_split(self, tags: Tuple[str, ...]) -> "Manifest":
        return self.subset([r for r in self.rows if r.split_tag in tags])

    def load_cases(self) -> List[Case]:
        cases = []
        for row in self.rows:
            case = load_case(self.resolve(row))
            if case.idh_label is None and row.idh_label is not None:
                case.idh_label = row.idh_label
            cases.append(case)
        return cases


def _parse_label(value: str, case_id: str) -> Optional[int]:
    text = value.strip()
    if text == "" or text.lower() in ("na", "nan", "null", "none"):
        return None
    if text in ("0", "1"):
        return int(text)
    raise InvalidLabel(f"Case {case_id} has unparsable IDH label {value!r}")


def load_manifest(path: Union[str, Path]) -> Manifest:
    """
    Load and validate a manifest CSV.

    Args:
        path: Path to a UTF-8 CSV with a header row

    Returns:
        The parsed Manifest; relative bundle paths resolve against its directory
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except OSError as e:
        raise DataError(f"Cannot read manifest {path}: {e}") from e
    missing = [c for c in ("case_id", "bundle_path") if c not in df.columns]
    if missing:
        raise DataError(f"Manifest {path} lacks required columns {missing}")

    rows = []
    for record in df.to_dict(orient="records"):
        case_id = record["case_id"].strip()
        rows.append(
            ManifestRow(
                case_id=case_id,
                bundle_path=record["bundle_path"].strip(),
                idh_label=_parse_label(record.get("idh_label", ""), case_id),
                split_tag=record.get("split_tag", "").strip() or "unassigned",
            )
        )
    manifest = Manifest(rows, path.parent)
    logger.info(f"Loaded manifest {path} with {len(manifest)} cases")
    return manifest


def write_manifest(manifest: Manifest, path: Union[str, Path]) -> Path:
    """Write a manifest CSV with the canonical column order."""
    path = Path(path)
    df = pd.DataFrame(
        [
            {
                "case_id": r.case_id,
                "bundle_path": r.bundle_path,
                "idh_label": "" if r.idh_label is None else str(r.idh_label),
                "split_tag": r.split_tag,
            }
            for r in manifest.rows
        ],
        columns=MANIFEST_COLUMNS,
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False)
    except OSError as e:
        raise WriteError(f"Failed to write manifest {path}: {e}") from e
    return path
