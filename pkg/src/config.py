"""
Run configuration.

A RunConfig composes every module config into one tree with sections data,
backbone, tafe, cmd, fusion, loss, train, metrics, occlusion and ablation.
Files are YAML (JSON documents parse too); `a.b=value` overrides are parsed
as YAML scalars and merged before validation.
"""

import copy
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union

import yaml
from pydantic import Field, ValidationError, model_validator

from src.core.config import DataConfig, StrictModel
from src.evaluation.config import MetricsConfig
from src.interpret.config import OcclusionConfig
from src.models.config import (
    ArchitectureConfig,
    BackboneConfig,
    CmdConfig,
    FusionConfig,
    TafeConfig,
)
from src.training.config import AblationConfig, LossConfig, TrainConfig
from src.utils.errors import ConfigError, WriteError
from src.utils.logging_utils import get_logger
from src.utils.utils import write_json

logger = get_logger(__name__)

RESOLVED_CONFIG = "config.resolved.yml"
CONFIG_SCHEMA = "config.schema.json"


class RunConfig(StrictModel):
    data: DataConfig = Field(default_factory=DataConfig)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    tafe: TafeConfig = Field(default_factory=TafeConfig)
    cmd: CmdConfig = Field(default_factory=CmdConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    occlusion: OcclusionConfig = Field(default_factory=OcclusionConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.tafe.n_cls != self.cmd.n_cls:
            raise ValueError(f"tafe.n_cls {self.tafe.n_cls} != cmd.n_cls {self.cmd.n_cls}")
        if self.data.crop_size is not None and tuple(self.data.crop_size) != tuple(
            self.backbone.input_size
        ):
            raise ValueError(
                f"data.crop_size {self.data.crop_size} must equal "
                f"backbone.input_size {self.backbone.input_size}"
            )
        if self.loss.class_weights is not None and len(self.loss.class_weights) != max(
            self.tafe.n_cls, 2
        ):
            raise ValueError("loss.class_weights needs one weight per class")
        if self.occlusion.mask_size > min(self.backbone.input_size):
            raise ValueError("occlusion.mask_size exceeds backbone.input_size")
        return self

    @property
    def input_size(self) -> Tuple[int, int, int]:
        return tuple(self.backbone.input_size)

    def architecture(self) -> ArchitectureConfig:
        """The parameter-defining subset, with module switches applied."""
        modules = self.train.modules
        tafe = self.tafe
        if modules.tafe_depth is not None:
            tafe = tafe.model_copy(update={"depth": modules.tafe_depth})
        return ArchitectureConfig(
            backbone=self.backbone,
            tafe=tafe,
            cmd=self.cmd,
            fusion=self.fusion,
            tafe_on=modules.tafe_on,
            cmd_on=modules.cmd_on,
        )


def _format_validation_error(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "<root>"
        if item["type"] == "extra_forbidden":
            problems.append(f"unknown key '{key}'")
        else:
            problems.append(f"'{key}': {item['msg']}")
    return "; ".join(problems)


def validate_config(raw: Mapping[str, Any]) -> RunConfig:
    """Validate a raw mapping, converting pydantic errors to ConfigError."""
    try:
        return RunConfig.model_validate(dict(raw))
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {_format_validation_error(e)}") from e


def set_dotted(tree: Dict[str, Any], key: str, value: Any) -> None:
    """Set tree[a][b][c] = value for key 'a.b.c', creating sections as needed."""
    parts = key.split(".")
    if not all(parts):
        raise ConfigError(f"Malformed override key {key!r}")
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"Override {key!r} descends into non-section '{part}'")
        node = child
    node[parts[-1]] = value


def parse_override(text: str) -> Tuple[str, Any]:
    """Split 'a.b=value', parsing the value as a YAML scalar."""
    if "=" not in text:
        raise ConfigError(f"Override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse value of override {text!r}: {e}") from e
    return key.strip(), value


def load_config_file(path: Optional[Union[str, Path]]) -> Dict[str, Any]:
    if path is None:
        return {}
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config {path} is not valid YAML/JSON: {e}") from e
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"Config {path} must hold a mapping at the top level")
    return raw


def parse_config(
    path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()
) -> RunConfig:
    """
    Load, override and validate a run configuration.

    Args:
        path: YAML or JSON config file (None for all defaults)
        overrides: 'section.key=value' strings applied in order

    Returns:
        A fully defaulted RunConfig
    """
    raw = load_config_file(path)
    overrides = list(overrides)
    for text in overrides:
        key, value = parse_override(text)
        set_dotted(raw, key, value)
    cfg = validate_config(raw)
    logger.debug(f"Parsed config from {path or '<defaults>'} with {len(overrides)} overrides")
    return cfg


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """A copy of cfg with dotted-key overrides applied and re-validated."""
    raw = copy.deepcopy(cfg.model_dump(mode="json"))
    for key, value in overrides.items():
        set_dotted(raw, key, value)
    return validate_config(raw)


def write_resolved_config(cfg: RunConfig, run_dir: Union[str, Path]) -> Path:
    """Write config.resolved.yml and config.schema.json into a run directory."""
    run_dir = Path(run_dir)
    path = run_dir / RESOLVED_CONFIG
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(cfg.model_dump(mode="json"), f, sort_keys=False)
    except OSError as e:
        raise WriteError(f"Failed to write {path}: {e}") from e
    write_json(run_dir / CONFIG_SCHEMA, RunConfig.model_json_schema())
    return path
