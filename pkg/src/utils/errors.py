"""
Error hierarchy shared by every engine module.

Each error records the module it was raised from so the command line can
report failures with their origin.
"""

from typing import Iterable, Optional


class HazardKanError(Exception):
    """Base class for all engine errors"""

    def __init__(self, message: str, module: str = "engine"):
        super().__init__(message)
        self.message = message
        self.module = module

    def __str__(self) -> str:
        return self.message


class InvalidInputError(HazardKanError, ValueError):
    pass


class DimensionError(HazardKanError, ValueError):
    pass


class StateError(HazardKanError, RuntimeError):
    pass


class UnfittableError(HazardKanError):
    pass


class DivergenceError(HazardKanError):
    def __init__(self, message: str, epoch: int, module: str = "training"):
        super().__init__(f"{message} (epoch {epoch})", module)
        self.epoch = epoch


class UndefinedMetricError(HazardKanError):
    pass


class DegenerateWeightsError(HazardKanError):
    pass


class OverPrunedError(HazardKanError):
    pass


class UnsupportedShapeError(HazardKanError):
    pass


class NotFoundError(HazardKanError, KeyError):
    def __str__(self) -> str:
        return self.message


class ParseError(InvalidInputError):
    def __init__(self, message: str, rows: Optional[Iterable[int]] = None, module: str = "dataio"):
        self.rows = sorted(rows) if rows is not None else []
        if self.rows:
            shown = ", ".join(str(r) for r in self.rows[:20])
            more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
            message = f"{message} at row(s) {shown}{more}"
        super().__init__(message, module)


class StratificationError(HazardKanError):
    pass


class CalibrationError(HazardKanError):
    pass


class SerializationError(HazardKanError):
    pass
