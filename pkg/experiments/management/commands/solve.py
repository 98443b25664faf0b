import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from apps.core.exceptions import SchemaMismatch, SolverError
from experiments.cli import (
    EXIT_PARTIAL,
    add_common_arguments,
    add_solver_arguments,
    config_errors,
    out_dir,
    read_config,
    solver_overrides,
)
from experiments.data import ExperimentKind
from experiments.services import build_problem, record_runs, run_seeds, solve_single, with_solver_overrides
from ippgda.data import RunStatus
from problems.data import problem_from_document
from second_stage.services import semismooth_newton


class Command(BaseCommand):
    help = "Run IPPGDA on one problem (generated, or loaded from a gen JSON file) and write its trace."

    def add_arguments(self, parser):
        add_common_arguments(parser)
        add_solver_arguments(parser)
        parser.add_argument("--problem", type=str, default=None, help="Problem JSON written by gen.")
        parser.add_argument("--tau", type=float, default=None)
        parser.add_argument("--n", type=int, default=None, help="Number of scenarios when generating.")
        parser.add_argument("--diagnostics", action="store_true",
                            help="Also write per-scenario Newton reports at the final iterate (JSON lines).")
        parser.add_argument("--no-ledger", action="store_true", help="Do not record the run in the database.")

    def handle(self, *args, **opts):
        run_cfg = read_config(opts)
        with config_errors():
            cfg = with_solver_overrides(run_cfg.solver, **solver_overrides(opts))
            spec = run_cfg.spec(
                ExperimentKind.SINGLE,
                master_seed=opts["seed"],
                output_dir=out_dir(opts),
                tau_values=(opts["tau"],) if opts["tau"] is not None else None,
                n_values=(opts["n"],) if opts["n"] is not None else None,
            )
            seeds = run_seeds(spec.master_seed, 0, 0, 0)
            if opts["problem"]:
                try:
                    doc = json.loads(Path(opts["problem"]).read_text(encoding="utf-8"))
                except (OSError, ValueError) as exc:
                    raise SchemaMismatch(f"cannot read problem file {opts['problem']}: {exc}") from exc
                prob = problem_from_document(doc)
                seeds = {**seeds, "instance": prob.instance.seed, "scenarios": prob.seed}

        if not opts["problem"]:
            try:
                prob = build_problem(spec, spec.tau_values[0], spec.box, spec.n_values[0], seeds)
            except SolverError as exc:
                raise CommandError(f"generation failed: {exc}", returncode=EXIT_PARTIAL) from exc

        outcome, trace = solve_single(prob, cfg, spec.output_dir, seeds)
        if not opts["no_ledger"]:
            record_runs(spec, [outcome])
        if trace is None:
            raise CommandError(f"solve failed: {outcome.error}", returncode=EXIT_PARTIAL)

        if opts["diagnostics"]:
            lines = []
            for i, scn in enumerate(prob.scenarios):
                rep = semismooth_newton(scn, trace.x1, trace.y1, tol=cfg.newton_tol_floor, cfg=cfg.newton_settings())
                lines.append(rep.to_json_line(i))
            (spec.output_dir / "newton.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")

        style = self.style.SUCCESS if trace.status == RunStatus.CONVERGED else self.style.WARNING
        self.stdout.write(style(
            f"{trace.status}: {trace.iterations} iterations, Res.val={trace.final.resval:.3e}, "
            f"objective={trace.final.objective:.6f} -> {spec.output_dir / outcome.trace_path}"
        ))
