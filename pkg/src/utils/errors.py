"""
Exception hierarchy for src.

Every error raised by the pipeline derives from PipelineError and carries the
exit code the command-line entry point maps it to.
"""


class PipelineError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(PipelineError, ValueError):
    """Invalid, unknown or mistyped configuration."""

    exit_code = 2


class ShapeError(PipelineError, ValueError):
    """Tensor or volume shapes do not match the configuration."""

    exit_code = 2


class DataError(PipelineError):
    """Input data violates the bundle, manifest or label contract."""

    exit_code = 3


class MissingSequence(DataError):
    pass


class CorruptBundle(DataError):
    pass


class InvalidMask(DataError):
    pass


class DuplicateCase(DataError):
    pass


class InvalidLabel(DataError):
    pass


class TumorOutOfBounds(DataError):
    pass


class EmptyRegion(DataError):
    pass


class EmptySplit(DataError):
    pass


class StratificationError(DataError):
    pass


class DegenerateLabels(DataError):
    """A statistic needs both classes but only one is present."""


class PairingError(DataError):
    pass


class InsufficientData(DataError):
    pass


class MissingLabel(DataError):
    pass


class CheckpointMismatch(DataError):
    pass


class DivergenceError(PipelineError):
    """Training produced a non-finite loss."""

    exit_code = 4


class WriteError(PipelineError, OSError):
    """Writing an artifact to disk failed."""

    exit_code = 5
