from __future__ import annotations

from typing import Sequence


class EurocastError(Exception):
    exit_code = 1

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


class UsageError(EurocastError):
    exit_code = 1


class DataError(EurocastError):
    exit_code = 2


class ModelVersionError(DataError):
    pass


class NumericalError(EurocastError):
    exit_code = 3


class ConvergenceError(NumericalError):
    """Iterative fit stopped without meeting its tolerance; ``trace`` holds the history."""

    def __init__(self, detail: str, trace: Sequence[float] = ()) -> None:
        super().__init__(detail)
        self.trace = list(trace)
