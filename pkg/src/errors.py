"""Exception hierarchy shared by every module and the CLI."""
from __future__ import annotations


class ConsparseError(Exception):
    """Base error. `details` ends up in the CLI's machine-readable error JSON."""

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": self.message, **self.details}


class NonFiniteValue(ConsparseError):
    def __init__(self, op_kind: str, value: float | None = None):
        super().__init__(f"Non-finite value produced by '{op_kind}'", op_kind=op_kind, value=repr(value))
        self.op_kind = op_kind


class TapeMismatch(ConsparseError):
    pass


class InvalidNoise(ConsparseError):
    pass


class ShapeError(ConsparseError):
    pass


class InvalidDeformation(ConsparseError):
    pass


class EmptyDataset(ConsparseError):
    pass


class ConvergenceError(ConsparseError):
    pass


class NonFiniteGradient(ConsparseError):
    def __init__(self, index: int, value: float):
        super().__init__(f"Non-finite gradient at parameter {index}", index=index, value=repr(value))
        self.index = index


class TooFewPoints(ConsparseError):
    pass


class UnknownDataset(ConsparseError):
    pass


class UnknownProblem(ConsparseError):
    pass


class SamplingError(ConsparseError):
    pass


class MissingColumn(ConsparseError):
    def __init__(self, column: str):
        super().__init__(f"Missing column: {column}", column=column)
        self.column = column


class NonNumeric(ConsparseError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"Non-numeric value {value!r} at row {row}, column {column}",
                         row=row, column=column)
        self.row = row
        self.column = column


class NonMonotoneStrain(ConsparseError):
    pass


class CorruptCheckpoint(ConsparseError):
    pass


class InvalidRange(ConsparseError):
    pass
