# apps/core/exceptions.py
"""
Error hierarchy shared by every solver app.

Everything the numerical code raises on purpose derives from SolverError so
the experiment coordinators can record a run as failed and move on.
"""
from __future__ import annotations

from typing import Any


class SolverError(Exception):
    """Base class for expected solver failures."""


class SingularMatrix(SolverError):
    def __init__(self, message: str, *, pivot: float | None = None, point: Any = None):
        super().__init__(message)
        self.pivot = pivot
        # Newton attaches the iterate at which the Jacobian broke down
        self.point = point


class NotSymmetric(SolverError):
    pass


class NonFiniteEntries(SolverError):
    pass


class InvalidDims(SolverError):
    pass


class IndefiniteScenario(SolverError):
    def __init__(self, message: str, *, index: int | None = None, attempts: int = 0):
        super().__init__(message)
        self.index = index
        self.attempts = attempts


class MaxIterations(SolverError):
    def __init__(self, message: str, *, iterations: int = 0, residual: float | None = None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class InvalidConfig(SolverError):
    pass


class SchemaMismatch(SolverError):
    pass


def add_context(exc: BaseException, note: str) -> None:
    """BaseException.add_note, with a fallback for interpreters older than 3.11."""
    if hasattr(exc, "add_note"):
        exc.add_note(note)
    else:
        exc.__notes__ = [*getattr(exc, "__notes__", []), note]
