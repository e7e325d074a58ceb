"""
Logging utilities for src.

This module provides consistent logging configuration and utility functions
for the src package, including run-scoped loggers that write into a run
directory next to the artifacts they describe.
"""

import logging
import os
import re
import sys
from pathlib import Path
from typing import Union

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def sanitize_name_for_path(name: str) -> str:
    """
    Sanitize a logger or component name for use as a file name.

    Args:
        name: Arbitrary component name (e.g. "fold_0", "ablation/TAFE-1")

    Returns:
        Name safe for use as a file name
    """
    # Replace invalid characters with underscores
    sanitized = re.sub(r'[<>:"/\\|?*@.\s]', "_", name.lower())
    # Remove any consecutive underscores
    sanitized = re.sub(r"_+", "_", sanitized)
    return sanitized.strip("_")


def _resolve_level(level=None) -> int:
    if level is None:
        level_name = os.environ.get("SRC_LOG_LEVEL", "INFO")
        return getattr(logging, level_name.upper(), logging.INFO)
    return level


def get_run_log_dir(run_dir: Union[str, Path]) -> Path:
    """
    Get the log directory inside a run directory.

    Args:
        run_dir: Run directory that owns the logs

    Returns:
        Path to the run's log directory
    """
    log_dir = Path(run_dir) / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir


def setup_run_logger(run_dir: Union[str, Path], name=None, level=None):
    """
    Configure and return a run-scoped logger with consistent formatting.

    Args:
        run_dir: Run directory; logs go to <run_dir>/logs/<name>.log
        name: Component name (defaults to "run")
        level: Logging level (defaults to SRC_LOG_LEVEL or INFO)

    Returns:
        Configured logger instance
    """
    level = _resolve_level(level)

    component = sanitize_name_for_path(name or "run")
    run_tag = sanitize_name_for_path(Path(run_dir).name)
    logger = logging.getLogger(f"run_{run_tag}_{component}")
    logger.setLevel(level)

    # Prevent inheritance from parent loggers to avoid duplicate messages
    logger.propagate = False

    # Always clear existing handlers to avoid duplicates
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    log_file = get_run_log_dir(run_dir) / f"{component}.log"
    file_handler = logging.FileHandler(log_file, mode="a")
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    logger.debug(f"Run logger setup - Component: {component} - Log file: {log_file}")

    return logger


def get_run_logger(run_dir: Union[str, Path, None], name=None):
    """
    Get a run-scoped logger, or the module logger when no run directory is set.

    Args:
        run_dir: Run directory (None falls back to a plain named logger)
        name: Component name (optional)

    Returns:
        Logger instance
    """
    if run_dir is None:
        return get_logger(f"src.{name}" if name else "src")
    return setup_run_logger(run_dir, name)


def setup_logger(name=None, level=None, log_file=None):
    """
    Configure and return a logger with consistent formatting.

    Args:
        name: Logger name (defaults to root logger if None)
        level: Logging level (defaults to INFO if None or if env var not set)
        log_file: Optional file path to write logs to

    Returns:
        Configured logger instance
    """
    level = _resolve_level(level)

    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Clear existing handlers to avoid duplicates when called multiple times
    if logger.hasHandlers():
        logger.handlers.clear()

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(str(log_file))
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def get_logger(name=None):
    """
    Get an existing logger or create a new one with default settings.

    Args:
        name: Logger name (optional)

    Returns:
        Logger instance
    """
    logger = logging.getLogger(name)

    # If logger doesn't have handlers, set it up
    if not logger.hasHandlers():
        log_dir = os.environ.get("SRC_LOG_DIR")
        log_file = None

        if log_dir:
            log_filename = f"{name or 'src'}.log"
            log_file = Path(log_dir) / log_filename

        logger = setup_logger(name, log_file=log_file)

    return logger
