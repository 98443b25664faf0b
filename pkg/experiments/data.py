# experiments/data.py
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from django.db import models

from apps.core.exceptions import InvalidConfig
from ippgda.data import RunStatus
from problems.data import Dimensions

VALUES_HEADER = ("box", "N", "instance", "objective_at_final", "psi_inner_max")
SUMMARY_HEADER = ("box", "N", "count", "objective_mean", "objective_std", "psi_mean", "psi_std")

EXP2_DESK_N = (10, 25, 50, 100, 200)
EXP2_DESK_INSTANCES = 10


class ExperimentKind(models.TextChoices):
    EXP1 = "exp1", "Experiment 1 (residual traces)"
    EXP2 = "exp2", "Experiment 2 (SAA convergence)"
    SINGLE = "single", "Single solve"


def box_label(box: tuple[float, float]) -> str:
    return f"{box[0]:g}:{box[1]:g}"


@dataclass(frozen=True)
class ExperimentSpec:
    """
    What to run. boxes holds every first-stage box the experiment sweeps; the
    residual-trace experiment and single solves use the first one.
    """
    kind: str
    tau_values: tuple[float, ...] = (0.5,)
    n_values: tuple[int, ...] = (50,)
    boxes: tuple[tuple[float, float], ...] = ((-10.0, 10.0),)
    num_instances: int = 5
    num_initial_points: int = 5
    master_seed: int = 1
    output_dir: Path = Path("runs")
    dims: Dimensions = field(default_factory=Dimensions)
    noise_scale: float = 0.1

    def __post_init__(self):
        if self.kind not in ExperimentKind.values:
            raise InvalidConfig(f"unknown experiment kind {self.kind!r}")
        if not self.tau_values or any(not t > 0 for t in self.tau_values):
            raise InvalidConfig(f"tau_values must be positive, got {self.tau_values}")
        if not self.n_values or any(int(n) != n or n < 1 for n in self.n_values):
            raise InvalidConfig(f"n_values must be positive counts, got {self.n_values}")
        if not self.boxes or any(not lb < ub for lb, ub in self.boxes):
            raise InvalidConfig(f"every box needs lb < ub, got {self.boxes}")
        if self.num_instances < 0:
            raise InvalidConfig("num_instances must be >= 0")
        if self.num_initial_points < 1:
            raise InvalidConfig("num_initial_points must be >= 1")
        if self.kind == ExperimentKind.EXP1 and len(self.n_values) != 1:
            raise InvalidConfig("exp1 runs a single sample size")
        if self.kind == ExperimentKind.EXP2 and len(self.tau_values) != 1:
            raise InvalidConfig("exp2 runs a single tau")

    @classmethod
    def defaults(cls, kind: str, **overrides: Any) -> "ExperimentSpec":
        if kind == ExperimentKind.EXP1:
            base = {"tau_values": (0.1, 0.5), "n_values": (50,), "num_instances": 5, "num_initial_points": 5}
        elif kind == ExperimentKind.EXP2:
            base = {
                "tau_values": (0.5,),
                "n_values": (10, 50, 200, 500, 1000, 3000),
                "boxes": ((-10.0, 10.0), (-20.0, 20.0)),
                "num_instances": 30,
                "num_initial_points": 1,
            }
        else:
            base = {"num_instances": 1, "num_initial_points": 1}
        base.update(overrides)
        return cls(kind=kind, **base)

    def desk_scale(self) -> "ExperimentSpec":
        return replace(self, n_values=EXP2_DESK_N, num_instances=EXP2_DESK_INSTANCES)

    @property
    def box(self) -> tuple[float, float]:
        return self.boxes[0]

    def as_dict(self) -> dict[str, Any]:
        return {
            "kind": str(self.kind),
            "tau_values": list(self.tau_values),
            "n_values": list(self.n_values),
            "boxes": [list(b) for b in self.boxes],
            "num_instances": self.num_instances,
            "num_initial_points": self.num_initial_points,
            "master_seed": self.master_seed,
            "dims": self.dims.as_dict(),
            "noise_scale": self.noise_scale,
        }


@dataclass
class RunOutcome:
    """One launched run as it appears in the manifest and the ledger."""
    kind: str
    tau: float
    box: tuple[float, float]
    n: int
    instance_index: int
    init_index: int | None
    seeds: dict[str, int]
    status: str
    iterations: int = 0
    final_resval: float | None = None
    objective: float | None = None
    psi_inner_max: float | None = None
    resampled: int = 0
    trace_path: str = ""
    error: str = ""
    elapsed: float = 0.0

    def manifest_row(self) -> dict[str, Any]:
        # elapsed stays out so reruns produce identical manifests
        return {
            "tau": self.tau,
            "box": list(self.box),
            "N": self.n,
            "instance": self.instance_index,
            "init": self.init_index,
            "seeds": self.seeds,
            "status": str(self.status),
            "iterations": self.iterations,
            "final_resval": self.final_resval,
            "objective": self.objective,
            "psi_inner_max": self.psi_inner_max,
            "resampled": self.resampled,
            "trace": self.trace_path,
            "error": self.error,
        }


@dataclass
class ExperimentResult:
    kind: str
    runs: list[RunOutcome]
    manifest_path: Path
    files: list[Path] = field(default_factory=list)

    @property
    def failures(self) -> list[RunOutcome]:
        return [r for r in self.runs if r.status == RunStatus.ERROR]
