from typing import Sequence


class AllocationError(Exception):
    """Base class of every error raised on purpose by the engine."""


class InfeasibleAssignmentError(AllocationError):
    """
    Raised when an assignment breaks a hard constraint.
    Keeps the offending team and constraint explicit for the caller.
    """

    def __init__(self, team: int, constraint: str, detail: str = ""):
        self.team = team
        self.constraint = constraint
        message = f"team {team} violates constraint '{constraint}'"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class InstanceFormatError(AllocationError, ValueError):
    """Instance document could not be parsed or is inconsistent."""


class SchemaMismatchError(AllocationError):
    """Feature schema of a dataset or checkpoint does not match the encoder."""


class CheckpointFormatError(AllocationError):
    """Checkpoint file is corrupt or of an unknown layout."""


class DatasetGenerationError(AllocationError):
    """Dataset generation aborted (e.g. too many timeout skips)."""


class TrainingDivergedError(AllocationError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch_index: int, sample_seeds: Sequence[int]):
        self.epoch = epoch
        self.batch_index = batch_index
        self.sample_seeds = list(sample_seeds)
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch_index} "
            f"(sample seeds: {self.sample_seeds[:10]}"
            f"{'...' if len(self.sample_seeds) > 10 else ''})"
        )
