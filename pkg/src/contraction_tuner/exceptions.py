"""Exception hierarchy for contraction-tuner."""

from typing import Optional


class ContractionTunerError(Exception):
    """Base class for all errors raised by the package."""


class SpecSyntaxError(ContractionTunerError, ValueError):
    """Benchmark DSL text does not match the grammar."""

    def __init__(self, message: str, position: int, line: Optional[int] = None):
        self.position = position
        self.line = line
        where = f"line {line}, column {position + 1}" if line is not None else f"position {position}"
        super().__init__(f"{message} ({where})")


class SpecSemanticError(ContractionTunerError, ValueError):
    """Benchmark parses but violates a contraction invariant."""


class OverCapacityError(ContractionTunerError, ValueError):
    """Loop nest has more loops than the observation can hold."""


class ShapeMismatchError(ContractionTunerError, ValueError):
    """Input tensor shape disagrees with the contraction extents."""


class PolicyDimensionError(ContractionTunerError, ValueError):
    """Network input does not match the policy's input width."""


class EpisodeDoneError(ContractionTunerError, RuntimeError):
    """Environment was stepped after the episode finished."""


class CheckpointError(ContractionTunerError, ValueError):
    """Checkpoint file is missing, truncated or corrupt."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written with an unsupported format version."""


class TrainingDivergedError(ContractionTunerError, RuntimeError):
    """Loss became non-finite during training."""


class DatasetError(ContractionTunerError, ValueError):
    """Dataset file is malformed or a split is unknown."""


class ReportError(ContractionTunerError, ValueError):
    """Result set cannot be aggregated into a report."""


class UnknownMethodError(ContractionTunerError, ValueError):
    """Requested tuning method does not exist."""
