# experiments/services.py
"""
Experiment coordinators.

Seeds are derived, never drawn: for tau index a, instance index i and
initial-point index j,

    instance  = derive_seed(master, a, i)
    scenarios = derive_seed(master, a, i, STREAM_SCENARIOS)
    init      = derive_seed(master, a, j, STREAM_INITIAL_POINT)

so any single run can be replayed alone. The SAA-convergence experiment uses
a = 0 and keys everything on the instance index only, which gives every box
and sample size the same instance, the same starting point and nested
scenario prefixes.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from collections import defaultdict
from dataclasses import replace
from pathlib import Path
from typing import Iterable

import numpy as np

from apps.core.exceptions import InvalidConfig, SchemaMismatch, SolverError
from apps.core.seeding import STREAM_INITIAL_POINT, STREAM_SCENARIOS, derive_seed, make_rng
from experiments.data import (
    SUMMARY_HEADER,
    VALUES_HEADER,
    ExperimentKind,
    ExperimentResult,
    ExperimentSpec,
    RunOutcome,
    box_label,
)
from ippgda.data import TRACE_HEADER, IppgdaTrace, RunStatus, SolverConfig
from ippgda.services import inner_max, run_ippgda, saa_objective
from problems.data import ProblemInstance, SaaProblem
from problems.services import build_saa_problem, generate_instance

logger = logging.getLogger(__name__)

# first-stage start: x components on [7, 10], y components on [0, 1]
X0_RANGE = (7.0, 10.0)
Y0_RANGE = (0.0, 1.0)

OBJECTIVE_TOL = 1e-10
INNER_MAX_TOL = 1e-8


def run_seeds(master_seed: int, tau_index: int, instance_index: int, init_index: int) -> dict[str, int]:
    return {
        "instance": derive_seed(master_seed, tau_index, instance_index),
        "scenarios": derive_seed(master_seed, tau_index, instance_index, STREAM_SCENARIOS),
        "init": derive_seed(master_seed, tau_index, init_index, STREAM_INITIAL_POINT),
    }


def initial_point(inst: ProblemInstance, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = make_rng(seed, STREAM_INITIAL_POINT)
    x0 = np.clip(rng.uniform(*X0_RANGE, size=inst.dims.n1), inst.lb, inst.ub)
    y0 = rng.uniform(*Y0_RANGE, size=inst.dims.m1)
    return x0, y0


def build_problem(spec: ExperimentSpec, tau: float, box: tuple[float, float], n: int, seeds: dict[str, int]) -> SaaProblem:
    inst = generate_instance(spec.dims, tau, box[0], box[1], seeds["instance"], spec.noise_scale)
    return build_saa_problem(inst, n, seeds["scenarios"])


# -----------------------------------------------------------------------------
# Files
# -----------------------------------------------------------------------------
def write_trace_csv(trace: IppgdaTrace, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(TRACE_HEADER)
        for record in trace.records:
            w.writerow(record.csv_row())
    return path


def write_json(payload: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_manifest(spec: ExperimentSpec, cfg: SolverConfig, runs: list[RunOutcome], path: Path) -> Path:
    return write_json(
        {
            "kind": str(spec.kind),
            "spec": spec.as_dict(),
            "solver": cfg.as_dict(),
            "runs": [r.manifest_row() for r in runs],
        },
        path,
    )


def record_runs(spec: ExperimentSpec, runs: Iterable[RunOutcome]) -> int:
    """Append the runs to the ExperimentRun ledger."""
    from experiments.models import ExperimentRun

    rows = [
        ExperimentRun(
            kind=r.kind,
            status=r.status,
            tau=r.tau,
            lb=r.box[0],
            ub=r.box[1],
            sample_size=r.n,
            instance_index=r.instance_index,
            init_index=r.init_index,
            master_seed=spec.master_seed,
            instance_seed=r.seeds.get("instance"),
            scenario_seed=r.seeds.get("scenarios"),
            init_seed=r.seeds.get("init"),
            iterations=r.iterations,
            final_resval=r.final_resval,
            objective=r.objective,
            psi_inner_max=r.psi_inner_max,
            resampled=r.resampled,
            trace_path=r.trace_path,
            error=r.error,
            elapsed_seconds=r.elapsed,
        )
        for r in runs
    ]
    ExperimentRun.objects.bulk_create(rows)
    return len(rows)


def _error_text(exc: SolverError) -> str:
    return "; ".join([f"{type(exc).__name__}: {exc}", *getattr(exc, "__notes__", [])])


def _relative(path: Path, root: Path) -> str:
    return path.relative_to(root).as_posix()


# -----------------------------------------------------------------------------
# Single solve
# -----------------------------------------------------------------------------
def solve_single(
    prob: SaaProblem,
    cfg: SolverConfig,
    out_dir: Path,
    seeds: dict[str, int],
    x0: np.ndarray | None = None,
    y0: np.ndarray | None = None,
) -> tuple[RunOutcome, IppgdaTrace | None]:
    """Run IPPGDA on one problem, writing trace.csv and trace.json to out_dir."""
    inst = prob.instance
    if x0 is None or y0 is None:
        x0, y0 = initial_point(inst, seeds["init"])
    outcome = RunOutcome(
        kind=ExperimentKind.SINGLE, tau=inst.tau, box=(inst.lb, inst.ub), n=prob.n,
        instance_index=0, init_index=0, seeds=seeds, status=RunStatus.ERROR, resampled=prob.resampled,
    )
    started = time.perf_counter()
    try:
        trace = run_ippgda(prob, x0, y0, cfg)
    except SolverError as exc:
        outcome.error = _error_text(exc)
        logger.error("single solve failed: %s", outcome.error)
        return outcome, None
    finally:
        outcome.elapsed = time.perf_counter() - started

    csv_path = write_trace_csv(trace, out_dir / "trace.csv")
    write_json({**trace.sidecar(), "seeds": seeds, "solver": cfg.as_dict()}, out_dir / "trace.json")
    outcome.status = trace.status
    outcome.iterations = trace.iterations
    outcome.final_resval = trace.final.resval
    outcome.objective = trace.final.objective
    outcome.trace_path = _relative(csv_path, out_dir)
    return outcome, trace


# -----------------------------------------------------------------------------
# Experiment 1: residual traces
# -----------------------------------------------------------------------------
def run_exp1(spec: ExperimentSpec, cfg: SolverConfig, *, record: bool = True) -> ExperimentResult:
    """
    For each tau and instance i: sample N scenarios, start from initial point
    i mod num_initial_points and write the Res.val trace. Failed runs are
    recorded and skipped.
    """
    if spec.kind != ExperimentKind.EXP1:
        raise InvalidConfig(f"run_exp1 needs an exp1 spec, got {spec.kind}")
    root = spec.output_dir / "exp1"
    root.mkdir(parents=True, exist_ok=True)
    n = spec.n_values[0]
    runs: list[RunOutcome] = []
    files: list[Path] = []

    for tau_index, tau in enumerate(spec.tau_values):
        for i in range(spec.num_instances):
            j = i % spec.num_initial_points
            seeds = run_seeds(spec.master_seed, tau_index, i, j)
            outcome = RunOutcome(
                kind=ExperimentKind.EXP1, tau=tau, box=spec.box, n=n,
                instance_index=i, init_index=j, seeds=seeds, status=RunStatus.ERROR,
            )
            started = time.perf_counter()
            try:
                prob = build_problem(spec, tau, spec.box, n, seeds)
                outcome.resampled = prob.resampled
                x0, y0 = initial_point(prob.instance, seeds["init"])
                trace = run_ippgda(prob, x0, y0, cfg)
            except SolverError as exc:
                outcome.error = _error_text(exc)
                logger.error("exp1 tau=%g instance=%d init=%d failed: %s", tau, i, j, outcome.error)
            else:
                path = write_trace_csv(trace, root / f"tau_{tau:g}" / f"instance_{i:02d}_init_{j:02d}.csv")
                files.append(path)
                outcome.status = trace.status
                outcome.iterations = trace.iterations
                outcome.final_resval = trace.final.resval
                outcome.objective = trace.final.objective
                outcome.trace_path = _relative(path, root)
                logger.info("exp1 tau=%g instance=%d init=%d status=%s iterations=%d resval=%.3e",
                            tau, i, j, trace.status, trace.iterations, trace.final.resval)
            outcome.elapsed = time.perf_counter() - started
            runs.append(outcome)

    manifest = write_manifest(spec, cfg, runs, root / "manifest.json")
    if record:
        record_runs(spec, runs)
    return ExperimentResult(kind=ExperimentKind.EXP1, runs=runs, manifest_path=manifest, files=files)


# -----------------------------------------------------------------------------
# Experiment 2: SAA convergence
# -----------------------------------------------------------------------------
def summarize(rows: list[list]) -> list[list]:
    """Per (box, N): count, mean and sample standard deviation of both values."""
    groups: dict[tuple[str, int], list[tuple[float, float]]] = defaultdict(list)
    for box, n, _instance, objective, psi in rows:
        groups[(box, n)].append((objective, psi))
    out = []
    for (box, n), values in groups.items():
        arr = np.array(values)
        std = arr.std(axis=0, ddof=1) if len(arr) > 1 else np.zeros(2)
        mean = arr.mean(axis=0)
        out.append([box, n, len(arr), float(mean[0]), float(std[0]), float(mean[1]), float(std[1])])
    return out


def _write_rows(path: Path, header: tuple[str, ...], rows: list[list]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def run_exp2(
    spec: ExperimentSpec,
    cfg: SolverConfig,
    *,
    record: bool = True,
    objective_tol: float = OBJECTIVE_TOL,
    inner_tol: float = INNER_MAX_TOL,
) -> ExperimentResult:
    """
    For each box, sample size and instance: run IPPGDA, then report the SAA
    objective at the final iterate and the inner maximum at the final x1.
    """
    if spec.kind != ExperimentKind.EXP2:
        raise InvalidConfig(f"run_exp2 needs an exp2 spec, got {spec.kind}")
    root = spec.output_dir / "exp2"
    root.mkdir(parents=True, exist_ok=True)
    tau = spec.tau_values[0]
    runs: list[RunOutcome] = []
    rows: list[list] = []

    for box in spec.boxes:
        for n in spec.n_values:
            for i in range(spec.num_instances):
                seeds = run_seeds(spec.master_seed, 0, i, i)
                outcome = RunOutcome(
                    kind=ExperimentKind.EXP2, tau=tau, box=box, n=n,
                    instance_index=i, init_index=None, seeds=seeds, status=RunStatus.ERROR,
                )
                started = time.perf_counter()
                try:
                    prob = build_problem(spec, tau, box, n, seeds)
                    outcome.resampled = prob.resampled
                    x0, y0 = initial_point(prob.instance, seeds["init"])
                    trace = run_ippgda(prob, x0, y0, cfg)
                    objective = saa_objective(trace.x1, trace.y1, prob, objective_tol)
                    _, psi = inner_max(trace.x1, prob, inner_tol, y_box=cfg.y_box, y0=trace.y1)
                except SolverError as exc:
                    outcome.error = _error_text(exc)
                    logger.error("exp2 box=%s N=%d instance=%d failed: %s", box_label(box), n, i, outcome.error)
                else:
                    outcome.status = trace.status
                    outcome.iterations = trace.iterations
                    outcome.final_resval = trace.final.resval
                    outcome.objective = objective
                    outcome.psi_inner_max = psi
                    rows.append([box_label(box), n, i, objective, psi])
                    logger.info("exp2 box=%s N=%d instance=%d status=%s objective=%.6f psi=%.6f",
                                box_label(box), n, i, trace.status, objective, psi)
                outcome.elapsed = time.perf_counter() - started
                runs.append(outcome)

    files = [
        _write_rows(root / "values.csv", VALUES_HEADER, rows),
        _write_rows(root / "summary.csv", SUMMARY_HEADER, summarize(rows)),
    ]
    manifest = write_manifest(spec, cfg, runs, root / "manifest.json")
    if record:
        record_runs(spec, runs)
    return ExperimentResult(kind=ExperimentKind.EXP2, runs=runs, manifest_path=manifest, files=files)


def paired_differences(rows: list[list], box: str) -> dict[int, float]:
    """
    Mean over instances of |value(N') - value(N)| for consecutive sample sizes
    N < N' in one box, keyed by the smaller N.
    """
    by_n: dict[int, dict[int, float]] = defaultdict(dict)
    for b, n, instance, objective, _psi in rows:
        if b == box:
            by_n[int(n)][int(instance)] = float(objective)
    sizes = sorted(by_n)
    out = {}
    for small, large in zip(sizes, sizes[1:]):
        common = sorted(set(by_n[small]) & set(by_n[large]))
        if common:
            out[small] = float(np.mean([abs(by_n[large][k] - by_n[small][k]) for k in common]))
    return out


def read_values(path: Path) -> list[list]:
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = tuple(next(reader, ()))
        if header != VALUES_HEADER:
            raise SchemaMismatch(f"{path} is not an exp2 values file")
        return [[box, int(n), int(i), float(o), float(p)] for box, n, i, o, p in reader]


def with_solver_overrides(cfg: SolverConfig, **overrides) -> SolverConfig:
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
