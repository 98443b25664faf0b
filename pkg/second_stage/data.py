# second_stage/data.py
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from linalg.dense import Vector
from problems.data import Scenario


@dataclass(frozen=True, eq=False)
class KktPoint:
    """
    mu = (x2, y2, pi_x, pi_y). pi_x prices T x1 + W x2 <= h, pi_y prices
    A y1 + B y2 <= c. residual is ||H(mu)|| when the producer computed it.
    """
    x2: Vector
    y2: Vector
    pi_x: Vector
    pi_y: Vector
    residual: float | None = None

    def as_vector(self) -> Vector:
        return np.concatenate([self.x2, self.y2, self.pi_x, self.pi_y])

    @classmethod
    def from_vector(cls, mu: Vector, scn: Scenario, residual: float | None = None) -> "KktPoint":
        n2, m2, l2 = scn.n2, scn.m2, scn.l2
        mu = np.asarray(mu, dtype=np.float64)
        return cls(
            x2=mu[:n2].copy(),
            y2=mu[n2:n2 + m2].copy(),
            pi_x=mu[n2 + m2:n2 + m2 + l2].copy(),
            pi_y=mu[n2 + m2 + l2:].copy(),
            residual=residual,
        )

    @classmethod
    def zeros(cls, scn: Scenario) -> "KktPoint":
        return cls(np.zeros(scn.n2), np.zeros(scn.m2), np.zeros(scn.l2), np.zeros(scn.s2))


@dataclass(frozen=True)
class NewtonSettings:
    ls_ratio: float = 0.25
    ls_backtrack: float = 0.5
    max_iter: int = 100
    max_backtracks: int = 40

    def __post_init__(self):
        if not 0 < self.ls_ratio < 0.5:
            raise ValueError(f"ls_ratio must lie in (0, 1/2), got {self.ls_ratio}")
        if not 0 < self.ls_backtrack < 1:
            raise ValueError(f"ls_backtrack must lie in (0, 1), got {self.ls_backtrack}")


@dataclass(frozen=True, eq=False)
class NewtonReport:
    point: KktPoint
    residual_norm: float
    iterations: int
    step_sizes: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    # only filled when the caller asks for it
    iterates: list[Vector] = field(default_factory=list)

    def to_json_line(self, scenario_index: int) -> str:
        return json.dumps(
            {
                "scenario": scenario_index,
                "iterations": self.iterations,
                "residual": self.residual_norm,
            },
            sort_keys=True,
        )
