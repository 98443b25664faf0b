# ippgda/data.py
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

from django.db import models

from apps.core.exceptions import InvalidConfig
from linalg.dense import Vector
from second_stage.data import NewtonSettings

TRACE_HEADER = ("k", "resval", "delta", "objective", "newton_iters")

LAMBDA_ESTIMATED = "estimated"
LAMBDA_CONFIGURED = "configured"


class RunStatus(models.TextChoices):
    CONVERGED = "Converged", "Converged"
    MAX_ITERS = "MaxIters", "Max iterations"
    ERROR = "Error", "Error"


@dataclass(frozen=True)
class SolverConfig:
    """
    Knobs of the outer loop. beta_x / beta_y of None mean the instance
    dependent default 0.1 / (1 + ||Q1|| + ||O1|| + ||S1||).
    """
    beta_x: float | None = None
    beta_y: float | None = None
    delta0: float = 1e-2
    delta_decay: float = 0.5
    delta_floor: float = 1e-12
    lambda_lb_mode: str = LAMBDA_ESTIMATED
    lambda_lb_value: float | None = None
    lambda_probe_count: int = 20
    newton_tol_cap: float = 1e-6
    newton_tol_floor: float = 1e-12
    max_outer_iters: int = 5000
    resval_tol: float = 1e-4
    ls_ratio: float = 0.25
    ls_backtrack: float = 0.5
    newton_max_iter: int = 100
    seed: int = 0
    halve_on_divergence: bool = True
    # box for Y1; None is all of R^m1
    y_box: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("beta_x", "beta_y"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidConfig(f"{name} must be positive, got {value}")
        if not 0 < self.delta_decay < 1:
            raise InvalidConfig(f"delta_decay must lie in (0, 1), got {self.delta_decay}")
        if not self.delta0 > 0 or not self.delta_floor > 0:
            raise InvalidConfig("delta0 and delta_floor must be positive")
        if not self.resval_tol > 0:
            raise InvalidConfig(f"resval_tol must be positive, got {self.resval_tol}")
        if not 0 < self.newton_tol_floor <= self.newton_tol_cap:
            raise InvalidConfig("need 0 < newton_tol_floor <= newton_tol_cap")
        if self.max_outer_iters < 0 or self.newton_max_iter < 1 or self.lambda_probe_count < 1:
            raise InvalidConfig("iteration caps and probe count must be positive")
        if self.lambda_lb_mode == LAMBDA_CONFIGURED:
            if self.lambda_lb_value is None or not self.lambda_lb_value > 0:
                raise InvalidConfig("configured lambda_lb_mode needs a positive lambda_lb_value")
        elif self.lambda_lb_mode != LAMBDA_ESTIMATED:
            raise InvalidConfig(f"unknown lambda_lb_mode {self.lambda_lb_mode!r}")
        if self.y_box is not None and not self.y_box[0] < self.y_box[1]:
            raise InvalidConfig(f"y_box needs lower < upper, got {self.y_box}")
        try:
            self.newton_settings()
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc

    def newton_settings(self) -> NewtonSettings:
        return NewtonSettings(
            ls_ratio=self.ls_ratio,
            ls_backtrack=self.ls_backtrack,
            max_iter=self.newton_max_iter,
        )

    def as_dict(self) -> dict[str, Any]:
        out = asdict(self)
        if self.y_box is not None:
            out["y_box"] = list(self.y_box)
        return out


@dataclass(eq=False)
class IterateState:
    """Mutable state carried from one outer iteration to the next."""
    k: int
    x1: Vector
    y1: Vector
    warm_starts: list
    vx_tilde: Vector | None = None
    vy_tilde: Vector | None = None
    delta_k: float = 0.0
    resval: float = float("inf")


@dataclass(frozen=True, eq=False)
class TraceRecord:
    k: int
    resval: float
    delta: float
    objective: float
    newton_iters: int
    epsilon: float
    lambda_lb: float
    beta_x: float
    beta_y: float
    x1: Vector
    y1: Vector
    vx: Vector
    vy: Vector

    def csv_row(self) -> list[str]:
        # repr keeps every bit of the float so reruns diff cleanly
        return [str(self.k), repr(self.resval), repr(self.delta), repr(self.objective), str(self.newton_iters)]


@dataclass(eq=False)
class IppgdaTrace:
    records: list[TraceRecord] = field(default_factory=list)
    status: str = RunStatus.MAX_ITERS
    x1: Vector | None = None
    y1: Vector | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def sidecar(self) -> dict[str, Any]:
        last = self.final
        return {
            "status": str(self.status),
            "iterations": self.iterations,
            "final_resval": last.resval,
            "final_objective": last.objective,
            "x1": last.x1.tolist(),
            "y1": last.y1.tolist(),
            "newton_iters_total": sum(r.newton_iters for r in self.records),
        }
