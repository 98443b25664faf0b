from django.core.management.base import BaseCommand, CommandError

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
from experiments.services import run_exp1, with_solver_overrides
from ippgda.data import RunStatus


class Command(BaseCommand):
    help = "Experiment 1: Res.val traces over instances and initial points for each tau."

    def add_arguments(self, parser):
        add_common_arguments(parser)
        add_solver_arguments(parser)
        parser.add_argument("--tau", type=float, action="append", default=None,
                            help="Tau value (repeat for several).")
        parser.add_argument("--n", type=int, default=None, help="Sample size.")
        parser.add_argument("--instances", type=int, default=None)
        parser.add_argument("--inits", type=int, default=None, help="Number of initial points.")
        parser.add_argument("--no-ledger", action="store_true", help="Do not record runs in the database.")

    def handle(self, *args, **opts):
        run_cfg = read_config(opts)
        with config_errors():
            cfg = with_solver_overrides(run_cfg.solver, **solver_overrides(opts))
            spec = run_cfg.spec(
                ExperimentKind.EXP1,
                master_seed=opts["seed"],
                output_dir=out_dir(opts),
                tau_values=tuple(opts["tau"]) if opts["tau"] else None,
                n_values=(opts["n"],) if opts["n"] is not None else None,
                num_instances=opts["instances"],
                num_initial_points=opts["inits"],
            )

        result = run_exp1(spec, cfg, record=not opts["no_ledger"])

        converged = sum(1 for r in result.runs if r.status == RunStatus.CONVERGED)
        self.stdout.write(f"Runs: {len(result.runs)} (converged={converged}, failed={len(result.failures)})")
        self.stdout.write(f"Manifest: {result.manifest_path}")
        if result.failures:
            raise CommandError(f"{len(result.failures)} run(s) failed; see the manifest", returncode=EXIT_PARTIAL)
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(result.files)} trace file(s)"))
