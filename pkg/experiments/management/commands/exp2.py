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
from experiments.data import ExperimentKind, box_label
from experiments.services import paired_differences, read_values, run_exp2, with_solver_overrides


class Command(BaseCommand):
    help = "Experiment 2: SAA objective values across sample sizes and first-stage boxes."

    def add_arguments(self, parser):
        add_common_arguments(parser)
        add_solver_arguments(parser)
        parser.add_argument("--n", type=int, action="append", default=None, help="Sample size (repeat for several).")
        parser.add_argument("--instances", type=int, default=None)
        parser.add_argument("--desk", action="store_true",
                            help="Reduced scale: N in 10, 25, 50, 100, 200 with 10 instances.")
        parser.add_argument("--no-ledger", action="store_true", help="Do not record runs in the database.")

    def handle(self, *args, **opts):
        run_cfg = read_config(opts)
        with config_errors():
            cfg = with_solver_overrides(run_cfg.solver, **solver_overrides(opts))
            spec = run_cfg.spec(ExperimentKind.EXP2, master_seed=opts["seed"], output_dir=out_dir(opts))
            if opts["desk"]:
                spec = spec.desk_scale()
            if opts["n"] or opts["instances"] is not None:
                spec = run_cfg.spec(
                    ExperimentKind.EXP2,
                    master_seed=spec.master_seed,
                    output_dir=spec.output_dir,
                    n_values=tuple(opts["n"]) if opts["n"] else spec.n_values,
                    num_instances=opts["instances"] if opts["instances"] is not None else spec.num_instances,
                )

        result = run_exp2(spec, cfg, record=not opts["no_ledger"])

        rows = read_values(result.files[0])
        for box in spec.boxes:
            diffs = paired_differences(rows, box_label(box))
            if diffs:
                text = ", ".join(f"N={n}: {d:.3e}" for n, d in diffs.items())
                self.stdout.write(f"box {box_label(box)} paired |dvalue|: {text}")
        self.stdout.write(f"Manifest: {result.manifest_path}")
        if result.failures:
            raise CommandError(f"{len(result.failures)} run(s) failed; see the manifest", returncode=EXIT_PARTIAL)
        self.stdout.write(self.style.SUCCESS(f"Wrote {', '.join(str(p) for p in result.files)}"))
