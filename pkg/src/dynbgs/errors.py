"""Exception hierarchy. Each family maps to one CLI exit code."""


class DynBGSError(Exception):
    exit_code = 1


class DataError(DynBGSError):
    """Bad or missing input data (exit code 2)."""

    exit_code = 2


class DatasetLayoutError(DataError):
    def __init__(self, root, missing):
        self.root = str(root)
        self.missing = missing
        super().__init__(f"malformed dataset layout at {self.root}: missing {missing}")


class NoTrainingDataError(DataError):
    pass


class CheckpointError(DynBGSError):
    """Checkpoint unreadable or incompatible with the data (exit code 3)."""

    exit_code = 3


class ShapeMismatchError(CheckpointError, ValueError):
    pass


class NumericError(DynBGSError, FloatingPointError):
    """Training produced a non-finite loss (exit code 4)."""

    exit_code = 4
