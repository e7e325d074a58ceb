"""
Utility functions for src.

This module provides various utility functions used across the src package,
including seeding, run directory management, JSON artifacts and the versions
manifest that makes a run reproducible.
"""

import hashlib
import json
import os
import platform
import random
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, Union

import numpy as np
import torch

from src.utils.errors import WriteError
from src.utils.logging_utils import get_logger

logger = get_logger(__name__)

VERSIONED_PACKAGES = (
    "numpy",
    "torch",
    "monai",
    "einops",
    "scipy",
    "scikit-learn",
    "statsmodels",
    "pandas",
    "safetensors",
    "pydantic",
    "pyyaml",
)


def seed_everything(seed: int) -> np.random.Generator:
    """
    Seed every random source used by the pipeline.

    Args:
        seed: Master seed

    Returns:
        A numpy Generator (PCG64) seeded from the same value
    """
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
    torch.use_deterministic_algorithms(True, warn_only=True)
    return make_rng(seed)


def make_rng(seed: Union[int, np.random.SeedSequence]) -> np.random.Generator:
    """Build the PCG64 generator used for all data-side randomness."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def make_run_dir(out_dir: Union[str, Path], command: str) -> Path:
    """
    Create a timestamped run directory under out_dir.

    Args:
        out_dir: Parent directory for runs
        command: Subcommand name used as the run prefix

    Returns:
        Path to the new run directory
    """
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    run_dir = Path(out_dir) / f"{command}-{stamp}"
    try:
        run_dir.mkdir(parents=True, exist_ok=False)
    except OSError as e:
        raise WriteError(f"Cannot create run directory {run_dir}: {e}") from e
    logger.info(f"Created run directory {run_dir}")
    return run_dir


def write_json(path: Union[str, Path], payload: Any) -> Path:
    """Write a JSON document, mapping I/O failures to WriteError."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
    except OSError as e:
        raise WriteError(f"Failed to write {path}: {e}") from e
    return path


def append_jsonl(path: Union[str, Path], record: Dict[str, Any]) -> None:
    """Append one record to a line-delimited JSON file."""
    try:
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    except OSError as e:
        raise WriteError(f"Failed to append to {path}: {e}") from e


def package_versions(packages: Iterable[str] = VERSIONED_PACKAGES) -> Dict[str, str]:
    """Installed versions of the numerical stack, "missing" when absent."""
    versions = {}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "missing"
    return versions


def write_versions_manifest(run_dir: Union[str, Path]) -> Path:
    """Write versions.json into a run directory."""
    payload = {
        "python": platform.python_version(),
        "packages": package_versions(),
        "deterministic_algorithms": torch.are_deterministic_algorithms_enabled(),
    }
    return write_json(Path(run_dir) / "versions.json", payload)


def write_seed_record(run_dir: Union[str, Path], seed: int, **extra: Any) -> Path:
    """Write seed.json into a run directory."""
    payload = {"seed": seed, "generator": "numpy.PCG64 via SeedSequence"}
    payload.update(extra)
    return write_json(Path(run_dir) / "seed.json", payload)


def config_digest(config: Dict[str, Any]) -> str:
    """
    Stable digest of a configuration mapping.

    Args:
        config: JSON-serializable mapping

    Returns:
        Hex SHA-256 of the canonical JSON encoding
    """
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
