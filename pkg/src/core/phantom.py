"""
Synthetic 4-sequence phantoms with parameterized ellipsoidal tumors.

Mutant phantoms carry the T2-FLAIR mismatch sign (bright homogeneous T2 core,
suppressed FLAIR core with a hyperintense FLAIR rim). Wildtype phantoms carry
heterogeneous signal of the same distribution on T2 and FLAIR with a blurred
boundary. All randomness comes from numpy's PCG64 generator seeded through
SeedSequence. Child 0 of the master SeedSequence draws labels and split tags;
case i of a dataset uses child i + 1.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from src.core.config import PhantomDatasetConfig
from src.core.preprocessing import zscore_normalize
from src.core.volume_io import (
    Case,
    Manifest,
    ManifestRow,
    case_from_arrays,
    write_case,
    write_manifest,
)
from src.types.volume import Dims
from src.utils.errors import ConfigError, EmptyRegion, TumorOutOfBounds, WriteError
from src.utils.logging_utils import get_logger
from src.utils.utils import make_rng

logger = get_logger(__name__)

# Edema extends to this multiple of the tumor radii
EDEMA_SCALE = 1.25
CORE, RIM, EDEMA = 1, 2, 3
GAIN_AMPLITUDE = 0.1
HETEROGENEITY_SIGMA = 2.0
HETEROGENEITY_AMPLITUDE = 0.5


@dataclass
class PhantomSpec:
    """Parameters of one phantom case."""

    dims: Dims
    tumor_center: Tuple[float, float, float]
    tumor_radii: Tuple[float, float, float]
    mismatch: bool
    mismatch_contrast: float = 2.0
    noise_sigma: float = 0.0
    boundary_sharpness: float = 2.0
    rim_thickness: float = 1.0
    seed: int = 0
    case_id: str = "phantom"

    def __post_init__(self):
        if min(self.tumor_radii) < 2:
            raise ConfigError(f"Tumor radii {self.tumor_radii} must be >= 2 voxels")
        if self.mismatch and self.mismatch_contrast <= 0:
            raise ConfigError("mismatch_contrast must be > 0 for mismatch phantoms")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0 <= self.rim_thickness < min(self.tumor_radii):
            raise ConfigError("rim_thickness must lie in [0, min(tumor_radii))")


def _check_bounds(spec: PhantomSpec) -> None:
    for axis, (dim, c, r) in enumerate(zip(spec.dims, spec.tumor_center, spec.tumor_radii)):
        extent = EDEMA_SCALE * r
        if c - extent < 0 or c + extent > dim - 1:
            raise TumorOutOfBounds(
                f"Tumor on axis {axis} spans [{c - extent:.2f}, {c + extent:.2f}] "
                f"outside [0, {dim - 1}]"
            )


def _normalized_radius(spec: PhantomSpec) -> Tuple[np.ndarray, np.ndarray]:
    coords = np.indices(spec.dims, dtype=np.float64)
    r2 = np.zeros(spec.dims)
    for axis in range(3):
        r2 += ((coords[axis] - spec.tumor_center[axis]) / spec.tumor_radii[axis]) ** 2
    return np.sqrt(r2), coords


def _gain_field(spec: PhantomSpec, coords: np.ndarray, rng: np.random.Generator):
    slopes = rng.uniform(-GAIN_AMPLITUDE, GAIN_AMPLITUDE, size=3)
    gain = np.ones(spec.dims)
    for axis in range(3):
        span = max(spec.dims[axis] - 1, 1)
        gain += slopes[axis] * (coords[axis] / span - 0.5)
    return gain


def _smooth_field(dims: Dims, rng: np.random.Generator) -> np.ndarray:
    field = gaussian_filter(rng.standard_normal(dims), HETEROGENEITY_SIGMA, mode="nearest")
    std = field.std()
    return field / std if std > 0 else field


def generate_phantom(spec: PhantomSpec) -> Case:
    """
    Generate one phantom case.

    Args:
        spec: Phantom parameters

    Returns:
        Case with T1, T1C, T2 and FLAIR volumes, a {0,1,2,3} mask and an IDH
        label of 1 for mismatch phantoms and 0 otherwise
    """
    _check_bounds(spec)
    rng = make_rng(spec.seed)
    r, coords = _normalized_radius(spec)
    delta = spec.mismatch_contrast

    core_limit = 1.0 - spec.rim_thickness / min(spec.tumor_radii)
    core = r <= core_limit
    rim = (r > core_limit) & (r <= 1.0)
    edema = (r > 1.0) & (r <= EDEMA_SCALE)
    mask = np.zeros(spec.dims, dtype=np.uint8)
    mask[core] = CORE
    mask[rim] = RIM
    mask[edema] = EDEMA

    base = _gain_field(spec, coords, rng)
    t1, t1c, t2, flair = (base.copy() for _ in range(4))

    if spec.mismatch:
        t2[core | rim] += delta
        flair[core] -= delta
        flair[rim] += delta
        t2[edema] += delta / 2
        flair[edema] += delta / 2
        t1[core | rim] -= delta / 2
        t1[edema] -= delta / 4
        t1c[:] = t1
    else:
        membership = 1.0 / (1.0 + r ** (2 * spec.boundary_sharpness))
        h_t2 = _smooth_field(spec.dims, rng)
        h_flair = _smooth_field(spec.dims, rng)
        t2 += delta * membership * (1.0 + HETEROGENEITY_AMPLITUDE * h_t2)
        flair += delta * membership * (1.0 + HETEROGENEITY_AMPLITUDE * h_flair)
        t1 -= 0.5 * delta * membership
        t1c[:] = t1 + delta * np.exp(-(((r - 1.0) / 0.15) ** 2))

    stacked = np.stack([t1, t1c, t2, flair])
    if spec.noise_sigma > 0:
        stacked = stacked + rng.normal(0.0, spec.noise_sigma, size=stacked.shape)

    return case_from_arrays(
        spec.case_id,
        stacked.astype(np.float32),
        mask,
        idh_label=1 if spec.mismatch else 0,
    )


def mismatch_oracle(case: Case) -> float:
    """
    Independent mismatch score: mean(T2|core) - mean(FLAIR|core).

    Each sequence is z-scored over all voxels first.
    """
    mask = case.mask_array()
    if mask is None or not (mask == CORE).any():
        raise EmptyRegion(f"Case {case.id} has no core voxels")
    core = mask == CORE
    t2 = zscore_normalize(case.sequences["T2"], "all-voxels").voxels
    flair = zscore_normalize(case.sequences["FLAIR"], "all-voxels").voxels
    return float(t2[core].astype(np.float64).mean() - flair[core].astype(np.float64).mean())


def mutant_count(cfg: PhantomDatasetConfig) -> int:
    """Number of mutant cases: round-half-up of fraction * n, kept in [1, n-1]."""
    n_mut = math.floor(cfg.mutant_fraction * cfg.n_cases + 0.5)
    return min(max(n_mut, 1), cfg.n_cases - 1)


def sample_spec(
    cfg: PhantomDatasetConfig, case_id: str, mismatch: bool, rng: np.random.Generator
) -> PhantomSpec:
    """Draw one PhantomSpec from the dataset parameter ranges."""
    radii = tuple(float(rng.uniform(*cfg.radius_range)) for _ in range(3))
    center = []
    for dim, radius in zip(cfg.dims, radii):
        low = EDEMA_SCALE * radius
        high = dim - 1 - EDEMA_SCALE * radius
        if low > high:
            raise ConfigError(f"Radius {radius:.2f} does not fit in dims {cfg.dims}")
        center.append(float(rng.uniform(low, high)))
    return PhantomSpec(
        dims=tuple(cfg.dims),
        tumor_center=tuple(center),
        tumor_radii=radii,
        mismatch=mismatch,
        mismatch_contrast=float(rng.uniform(*cfg.mismatch_contrast_range)),
        noise_sigma=float(rng.uniform(*cfg.noise_sigma_range)),
        boundary_sharpness=float(rng.uniform(*cfg.boundary_sharpness_range)),
        rim_thickness=float(rng.uniform(*cfg.rim_thickness_range)),
        seed=int(rng.integers(0, 2**63 - 1)),
        case_id=case_id,
    )


def plan_dataset(cfg: PhantomDatasetConfig) -> List[Tuple[PhantomSpec, str]]:
    """Specs and split tags for every case of a dataset, in case order."""
    n_mut = mutant_count(cfg)
    children = np.random.SeedSequence(cfg.master_seed).spawn(cfg.n_cases + 1)
    assign_rng = make_rng(children[0])
    labels = assign_rng.permutation([1] * n_mut + [0] * (cfg.n_cases - n_mut))

    tags = ["unassigned"] * cfg.n_cases
    if cfg.test_fraction > 0:
        tags = ["train"] * cfg.n_cases
        for cls in (0, 1):
            members = np.flatnonzero(labels == cls)
            n_test = math.floor(cfg.test_fraction * len(members) + 0.5)
            for index in assign_rng.permutation(members)[:n_test]:
                tags[int(index)] = "test"

    plan = []
    for i in range(cfg.n_cases):
        spec = sample_spec(cfg, f"case_{i:04d}", bool(labels[i]), make_rng(children[i + 1]))
        plan.append((spec, tags[i]))
    return plan


def generate_dataset(
    cfg: PhantomDatasetConfig, out_dir: Union[str, Path], jobs: int = 1
) -> Manifest:
    """
    Generate a phantom dataset on disk.

    Args:
        cfg: Dataset configuration
        out_dir: Output directory; bundles go to out_dir/cases/<id>
        jobs: Worker threads used to generate and write cases

    Returns:
        The manifest, also written to out_dir/manifest.csv
    """
    out_dir = Path(out_dir)
    plan = plan_dataset(cfg)
    n_mut = sum(spec.mismatch for spec, _ in plan)
    logger.info(
        f"Generating {cfg.n_cases} phantoms ({n_mut} mutant) into {out_dir} "
        f"with master seed {cfg.master_seed}"
    )

    def _build(item: Tuple[PhantomSpec, str]) -> ManifestRow:
        spec, tag = item
        case = generate_phantom(spec)
        relative = Path("cases") / spec.case_id
        write_case(case, out_dir / relative)
        return ManifestRow(spec.case_id, relative.as_posix(), case.idh_label, tag)

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
            rows = list(executor.map(_build, plan))
    except OSError as e:
        raise WriteError(f"Failed to generate dataset in {out_dir}: {e}") from e

    manifest = Manifest(rows, out_dir)
    write_manifest(manifest, out_dir / "manifest.csv")
    logger.info(f"Wrote manifest with {len(rows)} cases to {out_dir / 'manifest.csv'}")
    return manifest
