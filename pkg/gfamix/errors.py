from enum import IntEnum


class ExitCode(IntEnum):
    OK = 0
    VALIDATION = 2
    IO = 3
    NUMERICAL = 4


class GfaMixError(Exception):
    exit_code = ExitCode.VALIDATION


class ValidationError(GfaMixError):
    """
    Raised when a dataset, a set of hyperparameters or a command's inputs
    violate their invariants. Nothing has been computed or written yet.
    """

    exit_code = ExitCode.VALIDATION


class DataIOError(GfaMixError):
    """
    Raised when a manifest, CSV file or serialized document can't be read, or
    when its declared shapes disagree with its contents.
    """

    exit_code = ExitCode.IO

    def __init__(self, message: str, path=None) -> None:
        if path is not None:
            message = f"{message} ({path})"
        super().__init__(message)
        self.path = path


class NumericalError(GfaMixError):
    """
    Raised when the optimizer reaches a corrupted state: a precision matrix
    that is not positive definite, a non-finite bound or loss, or a
    responsibility row where every cluster has zero probability.
    """

    exit_code = ExitCode.NUMERICAL


class UnknownClassifier(ValidationError):
    def __init__(self, name: str, available: str) -> None:
        super().__init__(f'Unknown classifier "{name}"; {available}')
        self.name = name
