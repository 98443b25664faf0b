# experiments/config.py
"""
TOML run configuration.

    [dims]        n1, m1, n2, m2, l2, s2
    [instance]    tau, lb, ub, noise_scale
    [solver]      any SolverConfig field
    [experiment]  ExperimentSpec fields shared by every kind, with optional
                  [experiment.exp1] / [experiment.exp2] tables on top
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from django.conf import settings

from apps.core.exceptions import InvalidConfig, SolverError
from experiments.data import ExperimentKind, ExperimentSpec
from ippgda.data import SolverConfig
from problems.data import Dimensions

SECTIONS = {"dims", "instance", "solver", "experiment"}
SPEC_KEYS = {"tau_values", "n_values", "boxes", "num_instances", "num_initial_points", "master_seed", "output_dir", "noise_scale"}


@dataclass(frozen=True)
class InstanceParams:
    tau: float = 0.5
    lb: float = -10.0
    ub: float = 10.0
    noise_scale: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    dims: Dimensions = field(default_factory=Dimensions)
    instance: InstanceParams = field(default_factory=InstanceParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: dict[str, dict[str, Any]] = field(default_factory=dict)

    def spec(self, kind: str, **overrides: Any) -> ExperimentSpec:
        """Defaults for `kind`, then the TOML tables, then explicit overrides."""
        values: dict[str, Any] = {
            "dims": self.dims,
            "noise_scale": self.instance.noise_scale,
            "output_dir": Path(settings.SOLVER_OUTPUT_ROOT),
        }
        if kind == ExperimentKind.SINGLE:
            values.update(tau_values=(self.instance.tau,), boxes=((self.instance.lb, self.instance.ub),))
        values.update(self.experiment.get("common", {}))
        values.update(self.experiment.get(str(kind), {}))
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return ExperimentSpec.defaults(kind, **values)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc


def _known(section: str, table: dict[str, Any], allowed: set[str]) -> dict[str, Any]:
    unknown = set(table) - allowed
    if unknown:
        raise InvalidConfig(f"[{section}] has unknown keys: {', '.join(sorted(unknown))}")
    return table


def _spec_values(section: str, table: dict[str, Any]) -> dict[str, Any]:
    table = dict(_known(section, table, SPEC_KEYS))
    for key in ("tau_values", "n_values"):
        if key in table:
            table[key] = tuple(table[key])
    if "boxes" in table:
        table["boxes"] = tuple((float(lb), float(ub)) for lb, ub in table["boxes"])
    if "output_dir" in table:
        table["output_dir"] = Path(table["output_dir"])
    return table


def parse_config(doc: dict[str, Any]) -> RunConfig:
    _known("top level", doc, SECTIONS)
    try:
        dims = Dimensions(**_known("dims", doc.get("dims", {}), {f.name for f in fields(Dimensions)}))
        instance = InstanceParams(**_known("instance", doc.get("instance", {}), {f.name for f in fields(InstanceParams)}))
        solver_table = dict(_known("solver", doc.get("solver", {}), {f.name for f in fields(SolverConfig)}))
        if solver_table.get("y_box") is not None:
            solver_table["y_box"] = tuple(float(v) for v in solver_table["y_box"])
        solver = SolverConfig(**solver_table)
    except InvalidConfig:
        raise
    except (SolverError, TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc
    if not instance.lb < instance.ub or not instance.tau > 0:
        raise InvalidConfig(f"[instance] needs tau > 0 and lb < ub, got {instance}")

    raw = dict(doc.get("experiment", {}))
    experiment: dict[str, dict[str, Any]] = {}
    for kind in ExperimentKind.values:
        if isinstance(raw.get(kind), dict):
            experiment[kind] = _spec_values(f"experiment.{kind}", raw.pop(kind))
    experiment["common"] = _spec_values("experiment", raw)
    return RunConfig(dims=dims, instance=instance, solver=solver, experiment=experiment)


def load_config(path: str | Path | None = None) -> RunConfig:
    """
    Read a TOML file. With no path, SOLVER_CONFIG is used if it exists and the
    built-in defaults otherwise.
    """
    explicit = path is not None
    path = Path(path if explicit else settings.SOLVER_CONFIG)
    if not path.exists():
        if explicit:
            raise InvalidConfig(f"config file not found: {path}")
        return RunConfig()
    try:
        with path.open("rb") as f:
            doc = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    return parse_config(doc)
