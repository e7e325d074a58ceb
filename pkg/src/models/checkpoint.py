"""
Checkpoints as safetensors archives.

Floating tensors are stored as little-endian float32; integer buffers keep
their dtype. The archive metadata carries the architecture config as JSON and
its digest, which loaders compare to detect mismatched architectures.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import torch
import torch.nn as nn
from safetensors import safe_open
from safetensors.torch import save_file

from src.models.config import ArchitectureConfig
from src.utils.errors import CheckpointMismatch, WriteError
from src.utils.logging_utils import get_logger
from src.utils.utils import config_digest

logger = get_logger(__name__)


@dataclass
class LoadReport:
    """What a checkpoint load matched, skipped or could not place."""

    loaded: List[str] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)
    unexpected: List[str] = field(default_factory=list)
    mismatched: List[str] = field(default_factory=list)
    config_digest: Optional[str] = None

    @property
    def complete(self) -> bool:
        return not (self.missing or self.unexpected or self.mismatched)


def architecture_digest(arch: ArchitectureConfig) -> str:
    return config_digest(arch.model_dump(mode="json"))


def save_checkpoint(
    model: nn.Module,
    path: Union[str, Path],
    arch: ArchitectureConfig,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Save a model's state dict with its architecture config.

    Args:
        model: Model to save
        path: Target .safetensors path
        arch: Architecture config stored in the metadata
        extra: Additional JSON-serializable metadata (e.g. best_epoch)

    Returns:
        The checkpoint path
    """
    path = Path(path)
    tensors = {}
    for name, tensor in model.state_dict().items():
        tensor = tensor.detach().cpu()
        if tensor.is_floating_point():
            tensor = tensor.to(torch.float32)
        tensors[name] = tensor.contiguous()
    metadata = {
        "config_digest": architecture_digest(arch),
        "config": json.dumps(arch.model_dump(mode="json"), sort_keys=True),
        "extra": json.dumps(extra or {}, sort_keys=True),
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_file(tensors, str(path), metadata=metadata)
    except OSError as e:
        raise WriteError(f"Failed to write checkpoint {path}: {e}") from e
    logger.debug(f"Saved checkpoint {path} ({len(tensors)} tensors)")
    return path


def read_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, torch.Tensor], Dict[str, str]]:
    """Tensors and metadata of a checkpoint."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointMismatch(f"Checkpoint {path} does not exist")
    try:
        with safe_open(str(path), framework="pt") as f:
            metadata = f.metadata() or {}
            tensors = {name: f.get_tensor(name) for name in f.keys()}
    except Exception as e:
        raise CheckpointMismatch(f"Cannot read checkpoint {path}: {e}") from e
    return tensors, metadata


def checkpoint_architecture(path: Union[str, Path]) -> ArchitectureConfig:
    """Rebuild the ArchitectureConfig stored in a checkpoint."""
    _, metadata = read_checkpoint(path)
    if "config" not in metadata:
        raise CheckpointMismatch(f"Checkpoint {path} carries no architecture config")
    return ArchitectureConfig.model_validate(json.loads(metadata["config"]))


def load_checkpoint(
    path: Union[str, Path],
    model: nn.Module,
    strict: bool = True,
    expected_digest: Optional[str] = None,
) -> LoadReport:
    """
    Load checkpoint tensors into a model.

    Args:
        path: Checkpoint path
        model: Model whose parameters are replaced in place
        strict: When true any missing, unexpected or mis-shaped tensor raises
            CheckpointMismatch; otherwise unmatched tensors keep their values
        expected_digest: When given, the stored config digest must match

    Returns:
        LoadReport listing loaded and unmatched tensor names
    """
    tensors, metadata = read_checkpoint(path)
    report = LoadReport(config_digest=metadata.get("config_digest"))
    if expected_digest is not None and report.config_digest != expected_digest:
        raise CheckpointMismatch(
            f"Checkpoint {path} digest {report.config_digest} != expected {expected_digest}"
        )

    state = model.state_dict()
    for name, target in state.items():
        if name not in tensors:
            report.missing.append(name)
        elif tuple(tensors[name].shape) != tuple(target.shape):
            report.mismatched.append(name)
        else:
            state[name] = tensors[name].to(dtype=target.dtype, device=target.device)
            report.loaded.append(name)
    report.unexpected = sorted(set(tensors) - set(state))

    if strict and not report.complete:
        raise CheckpointMismatch(
            f"Checkpoint {path} does not match the model: "
            f"missing={report.missing[:5]} unexpected={report.unexpected[:5]} "
            f"mismatched={report.mismatched[:5]}"
        )
    model.load_state_dict(state, strict=True)
    logger.info(
        f"Loaded {len(report.loaded)} tensors from {path} "
        f"(missing {len(report.missing)}, unexpected {len(report.unexpected)}, "
        f"mismatched {len(report.mismatched)})"
    )
    return report
