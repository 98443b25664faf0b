from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from experiments.cli import EXIT_INVALID_CONFIG, config_errors
from experiments.plotting import emit_overlay, emit_plot


class Command(BaseCommand):
    help = (
        "Render a trace, exp2 values or exp2 summary CSV as an SVG chart. "
        "Given a directory of traces (e.g. exp1/tau_0.5), overlay them on one chart."
    )

    def add_arguments(self, parser):
        parser.add_argument("csv_path", type=str, help="Trace CSV, exp2 values.csv/summary.csv, or a trace directory")
        parser.add_argument("--out", type=str, default=None, help="SVG path (default: next to the input).")

    def handle(self, *args, **opts):
        csv_path = Path(opts["csv_path"]).expanduser()
        if not csv_path.exists():
            raise CommandError(f"CSV not found: {csv_path}", returncode=EXIT_INVALID_CONFIG)
        with config_errors():
            if csv_path.is_dir():
                path = emit_overlay(csv_path, opts["out"])
            else:
                path = emit_plot(csv_path, opts["out"])
        self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
