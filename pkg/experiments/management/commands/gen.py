import json

from django.core.management.base import BaseCommand, CommandError

from apps.core.exceptions import SolverError
from experiments.cli import EXIT_PARTIAL, add_common_arguments, config_errors, out_dir, read_config
from experiments.data import ExperimentKind
from experiments.services import build_problem, run_seeds
from problems.data import problem_to_document


class Command(BaseCommand):
    help = "Generate a game instance with its scenario set and write it as JSON."

    def add_arguments(self, parser):
        add_common_arguments(parser)
        parser.add_argument("--tau", type=float, default=None, help="Scenario regularisation tau.")
        parser.add_argument("--n", type=int, default=None, help="Number of scenarios.")
        parser.add_argument("--file", type=str, default="problem.json", help="File name inside the output directory.")

    def handle(self, *args, **opts):
        run_cfg = read_config(opts)
        with config_errors():
            spec = run_cfg.spec(
                ExperimentKind.SINGLE,
                master_seed=opts["seed"],
                output_dir=out_dir(opts),
                tau_values=(opts["tau"],) if opts["tau"] is not None else None,
                n_values=(opts["n"],) if opts["n"] is not None else None,
            )
            seeds = run_seeds(spec.master_seed, 0, 0, 0)
        try:
            prob = build_problem(spec, spec.tau_values[0], spec.box, spec.n_values[0], seeds)
        except SolverError as exc:
            raise CommandError(f"generation failed: {exc}", returncode=EXIT_PARTIAL) from exc

        path = spec.output_dir / opts["file"]
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(problem_to_document(prob), sort_keys=True) + "\n", encoding="utf-8")

        if prob.resampled:
            self.stdout.write(self.style.WARNING(f"Resampled {prob.resampled} indefinite scenario draws"))
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {path}: N={prob.n} tau={prob.instance.tau:g} sigma_lb={prob.instance.sigma_lb:.4g}"
        ))
