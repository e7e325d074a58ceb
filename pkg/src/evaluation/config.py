"""Configuration for evaluation metrics and reports."""

from typing import Optional

from pydantic import Field

from src.core.config import StrictModel
from src.types.model import PosthocMethod, StdMode


class MetricsConfig(StrictModel):
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    ci_level: float = Field(0.95, gt=0.0, lt=1.0)
    std_mode: StdMode = "sample"
    posthoc: PosthocMethod = "bonferroni"
    # Model name whose pooled scores the others are tested against
    reference_model: Optional[str] = None
