"""
Utility functions for the src package.

This module provides various utility functions used across the src package.
"""

from src.utils.errors import PipelineError
from src.utils.logging_utils import get_logger, get_run_logger, setup_logger
from src.utils.utils import (
    config_digest,
    make_rng,
    make_run_dir,
    seed_everything,
    write_json,
)

__all__ = [
    "PipelineError",
    "get_logger",
    "get_run_logger",
    "setup_logger",
    "config_digest",
    "make_rng",
    "make_run_dir",
    "seed_everything",
    "write_json",
]
