import csv
import json
import os
import re
import tempfile
from io import StringIO
from pathlib import Path
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from apps.core.exceptions import InvalidConfig, SchemaMismatch
from experiments.config import load_config, parse_config
from experiments.data import SUMMARY_HEADER, VALUES_HEADER, ExperimentKind, ExperimentSpec
from experiments.models import ExperimentRun
from experiments.plotting import emit_overlay, emit_plot
from experiments.services import paired_differences, read_values, run_exp1, run_exp2
from ippgda.data import TRACE_HEADER, RunStatus, SolverConfig

TRACE_HEADER_LINE = "k,resval,delta,objective,newton_iters"


class TempDirMixin:
    def make_dir(self) -> Path:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        return Path(tmp.name)


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    return path


class ConfigTests(TempDirMixin, SimpleTestCase):
    def test_empty_document_gives_defaults(self):
        cfg = parse_config({})
        self.assertEqual(cfg.solver, SolverConfig())
        self.assertEqual(cfg.instance.tau, 0.5)

    def test_shipped_file(self):
        cfg = load_config(settings.BASE_DIR / "config" / "experiment.toml")
        exp1 = cfg.spec(ExperimentKind.EXP1)
        self.assertEqual(exp1.tau_values, (0.1, 0.5))
        self.assertEqual(exp1.n_values, (50,))
        self.assertEqual((exp1.num_instances, exp1.num_initial_points), (5, 5))
        exp2 = cfg.spec(ExperimentKind.EXP2)
        self.assertEqual(exp2.n_values, (10, 50, 200, 500, 1000, 3000))
        self.assertEqual(exp2.boxes, ((-10.0, 10.0), (-20.0, 20.0)))
        self.assertEqual(exp2.num_instances, 30)
        self.assertEqual(exp2.master_seed, 1)

    def test_overrides_win(self):
        cfg = parse_config({"experiment": {"master_seed": 4, "exp1": {"num_instances": 3}}})
        spec = cfg.spec(ExperimentKind.EXP1, num_instances=2, master_seed=None)
        self.assertEqual(spec.num_instances, 2)
        self.assertEqual(spec.master_seed, 4)

    def test_invalid_documents(self):
        for doc in (
            {"solver": {"step": 1.0}},
            {"plots": {}},
            {"solver": {"delta_decay": 1.5}},
            {"dims": {"n2": 1, "l2": 2}},
            {"instance": {"lb": 1.0, "ub": -1.0}},
            {"experiment": {"exp1": {"n_values": [10, 20]}}},
        ):
            with self.assertRaises(InvalidConfig, msg=str(doc)):
                parse_config(doc).spec(ExperimentKind.EXP1)

    def test_missing_explicit_file(self):
        with self.assertRaises(InvalidConfig):
            load_config(self.make_dir() / "nope.toml")

    def test_broken_toml(self):
        path = self.make_dir() / "bad.toml"
        path.write_text("[solver\nbeta_x = ", encoding="utf-8")
        with self.assertRaises(InvalidConfig):
            load_config(path)


class Exp1Tests(TempDirMixin, TestCase):
    def spec(self, out, **overrides):
        values = {"tau_values": (0.5,), "n_values": (3,), "num_instances": 2, "num_initial_points": 2}
        values.update(overrides)
        return ExperimentSpec.defaults(ExperimentKind.EXP1, output_dir=out, **values)

    def test_traces_manifest_and_ledger(self):
        out = self.make_dir()
        result = run_exp1(self.spec(out), SolverConfig())

        self.assertEqual(len(result.files), 2)
        self.assertTrue((out / "exp1" / "tau_0.5" / "instance_00_init_00.csv").exists())
        self.assertTrue((out / "exp1" / "tau_0.5" / "instance_01_init_01.csv").exists())
        for path in result.files:
            lines = path.read_text(encoding="utf-8").splitlines()
            self.assertEqual(lines[0], TRACE_HEADER_LINE)
            self.assertLessEqual(float(lines[-1].split(",")[1]), 1e-4)

        manifest = json.loads(result.manifest_path.read_text(encoding="utf-8"))
        self.assertEqual(len(manifest["runs"]), 2)
        self.assertEqual({r["status"] for r in manifest["runs"]}, {"Converged"})
        self.assertEqual(ExperimentRun.objects.filter(kind="exp1", status=RunStatus.CONVERGED).count(), 2)

    def test_rerun_is_byte_identical(self):
        first, second = self.make_dir(), self.make_dir()
        run_exp1(self.spec(first), SolverConfig(), record=False)
        run_exp1(self.spec(second), SolverConfig(), record=False)
        files = sorted(p.relative_to(first) for p in (first / "exp1").rglob("*") if p.is_file())
        self.assertGreater(len(files), 0)
        for rel in files:
            self.assertEqual((first / rel).read_bytes(), (second / rel).read_bytes(), msg=str(rel))

    def test_no_instances(self):
        out = self.make_dir()
        result = run_exp1(self.spec(out, num_instances=0), SolverConfig())
        self.assertEqual(json.loads(result.manifest_path.read_text(encoding="utf-8"))["runs"], [])
        self.assertEqual(list(out.rglob("*.csv")), [])
        self.assertEqual(ExperimentRun.objects.count(), 0)

    def test_failed_run_is_recorded(self):
        out = self.make_dir()
        result = run_exp1(self.spec(out, tau_values=(1e-3,), num_instances=1), SolverConfig())
        self.assertEqual(len(result.failures), 1)
        row = json.loads(result.manifest_path.read_text(encoding="utf-8"))["runs"][0]
        self.assertEqual(row["status"], "Error")
        self.assertIn("IndefiniteScenario", row["error"])
        self.assertEqual(ExperimentRun.objects.get().status, RunStatus.ERROR)


class Exp2Tests(TempDirMixin, TestCase):
    def test_values_summary_and_box_ordering(self):
        out = self.make_dir()
        spec = ExperimentSpec.defaults(ExperimentKind.EXP2, output_dir=out, n_values=(3, 6), num_instances=2)
        result = run_exp2(spec, SolverConfig())

        values_path, summary_path = result.files
        rows = read_values(values_path)
        self.assertEqual(len(rows), 8)
        with summary_path.open(newline="", encoding="utf-8") as f:
            summary = list(csv.reader(f))
        self.assertEqual(tuple(summary[0]), SUMMARY_HEADER)
        self.assertEqual(len(summary) - 1, 4)

        means = {(box, int(n)): float(mean) for box, n, _c, mean, *_ in summary[1:]}
        for n in (3, 6):
            self.assertLessEqual(means[("-20:20", n)], means[("-10:10", n)] + 1e-6)
        self.assertEqual(set(paired_differences(rows, "-10:10")), {3})
        self.assertEqual(ExperimentRun.objects.filter(kind="exp2").count(), 8)

    def test_rerun_is_byte_identical(self):
        first, second = self.make_dir(), self.make_dir()
        for out in (first, second):
            spec = ExperimentSpec.defaults(ExperimentKind.EXP2, output_dir=out, n_values=(3, 6), num_instances=2)
            run_exp2(spec, SolverConfig(), record=False)
        for name in ("values.csv", "summary.csv", "manifest.json"):
            path = first / "exp2" / name
            self.assertTrue(path.exists(), msg=name)
            self.assertEqual(path.read_bytes(), (second / "exp2" / name).read_bytes(), msg=name)


@skipUnless(os.getenv("SOLVER_DESK_TESTS"), "set SOLVER_DESK_TESTS=1 to run the desk-scale experiments")
class DeskScaleTests(TempDirMixin, SimpleTestCase):
    def test_exp1_defaults_terminate(self):
        out = self.make_dir()
        spec = ExperimentSpec.defaults(ExperimentKind.EXP1, output_dir=out)
        result = run_exp1(spec, SolverConfig(), record=False)

        for run in result.runs:
            if run.tau == 0.5:
                self.assertEqual(run.status, RunStatus.CONVERGED, msg=run.trace_path)
                self.assertLessEqual(run.iterations, 5000)
            else:
                self.assertTrue(run.status == RunStatus.CONVERGED or run.resampled > 0, msg=run.trace_path)

    def test_exp2_sample_size_convergence(self):
        out = self.make_dir()
        spec = ExperimentSpec.defaults(ExperimentKind.EXP2, output_dir=out).desk_scale()
        result = run_exp2(spec, SolverConfig(), record=False)
        self.assertEqual(result.failures, [])
        rows = read_values(result.files[0])

        for box in ("-10:10", "-20:20"):
            by_n = {}
            for b, n, instance, objective, _psi in rows:
                if b == box:
                    by_n.setdefault(n, {})[instance] = objective
            sizes = sorted(by_n)
            gaps = [
                np.array([abs(by_n[large][i] - by_n[small][i]) for i in sorted(by_n[small])])
                for small, large in zip(sizes, sizes[1:])
            ]
            for before, after in zip(gaps, gaps[1:]):
                self.assertLessEqual(after.mean(), before.mean() + before.std(ddof=1), msg=box)

        small_box = {(n, i): o for b, n, i, o, _p in rows if b == "-10:10"}
        large_box = {(n, i): o for b, n, i, o, _p in rows if b == "-20:20"}
        for n in spec.n_values:
            keys = [k for k in small_box if k[0] == n]
            self.assertLessEqual(
                np.mean([large_box[k] for k in keys]), np.mean([small_box[k] for k in keys]) + 1e-6
            )


class PlotTests(TempDirMixin, SimpleTestCase):
    def test_trace_has_one_polyline(self):
        tmp = self.make_dir()
        path = write_csv(tmp / "t.csv", TRACE_HEADER, [[0, 1.0, 1e-2, 3.0, 4], [1, 0.1, 5e-3, 2.0, 3], [2, 0.0, 2.5e-3, 1.5, 2]])
        svg = emit_plot(path).read_text(encoding="utf-8")
        polylines = re.findall(r'<polyline[^>]*points="([^"]*)"', svg)
        self.assertEqual(len(polylines), 1)
        self.assertEqual(len(polylines[0].split(",")), 3)

    def test_empty_body(self):
        path = write_csv(self.make_dir() / "t.csv", TRACE_HEADER, [])
        with self.assertRaises(SchemaMismatch):
            emit_plot(path)

    def test_unknown_header(self):
        path = write_csv(self.make_dir() / "t.csv", ("a", "b"), [[1, 2]])
        with self.assertRaises(SchemaMismatch):
            emit_plot(path)

    def test_summary_ticks(self):
        rows = []
        for box in ("-10:10", "-20:20"):
            for n in (10, 50, 200, 500, 1000, 3000):
                rows.append([box, n, 30, -1.0 - 1.0 / n, 0.1, -1.0, 0.1])
        path = write_csv(self.make_dir() / "summary.csv", SUMMARY_HEADER, rows)
        out = self.make_dir() / "plots" / "summary.svg"
        svg = emit_plot(path, out).read_text(encoding="utf-8")
        self.assertEqual(svg.count("N="), 6)
        self.assertEqual(svg.count("<polyline"), 2)

    def test_values_scatter(self):
        rows = []
        for box in ("-10:10", "-20:20"):
            for n in (3, 6):
                for i in range(2):
                    rows.append([box, n, i, -1.0 - 0.1 * i, -0.9])
        path = write_csv(self.make_dir() / "values.csv", VALUES_HEADER, rows)
        svg = emit_plot(path).read_text(encoding="utf-8")
        self.assertEqual(svg.count("<circle"), 8)
        self.assertEqual(svg.count("N="), 2)

    def test_overlay_one_polyline_per_trace(self):
        tmp = self.make_dir()
        for i in range(3):
            write_csv(tmp / f"instance_0{i}_init_0{i}.csv", TRACE_HEADER,
                      [[k, 10.0 ** -(k + i), 1e-2, 1.0, 2] for k in range(4 + i)])
        out = emit_overlay(tmp)
        self.assertEqual(out, tmp / "overlay.svg")
        polylines = re.findall(r'<polyline[^>]*points="([^"]*)"', out.read_text(encoding="utf-8"))
        self.assertEqual(sorted(len(p.split(",")) for p in polylines), [4, 5, 6])

    def test_overlay_rejects_empty_and_foreign_files(self):
        tmp = self.make_dir()
        with self.assertRaises(SchemaMismatch):
            emit_overlay(tmp)
        write_csv(tmp / "summary.csv", SUMMARY_HEADER, [["-10:10", 3, 2, -1.0, 0.1, -1.0, 0.1]])
        with self.assertRaises(SchemaMismatch):
            emit_overlay(tmp)


class CommandTests(TempDirMixin, TestCase):
    def test_gen_then_solve(self):
        gen_dir, solve_dir = self.make_dir(), self.make_dir()
        call_command("gen", "--out", str(gen_dir), "--n", "3", "--seed", "5", stdout=StringIO())
        doc = json.loads((gen_dir / "problem.json").read_text(encoding="utf-8"))
        self.assertEqual(doc["version"], 1)
        self.assertEqual(len(doc["scenarios"]), 3)

        stdout = StringIO()
        call_command(
            "solve", "--problem", str(gen_dir / "problem.json"), "--out", str(solve_dir),
            "--max-iters", "3", "--diagnostics", stdout=stdout,
        )
        self.assertIn("MaxIters", stdout.getvalue())
        self.assertEqual(len((solve_dir / "trace.csv").read_text(encoding="utf-8").splitlines()), 5)
        self.assertEqual(len((solve_dir / "newton.jsonl").read_text(encoding="utf-8").splitlines()), 3)
        sidecar = json.loads((solve_dir / "trace.json").read_text(encoding="utf-8"))
        self.assertEqual(sidecar["seeds"]["instance"], doc["seeds"]["instance"])
        self.assertEqual(ExperimentRun.objects.get().kind, ExperimentKind.SINGLE)

    def test_invalid_config_exits_2(self):
        bad = self.make_dir() / "bad.toml"
        bad.write_text("[solver]\nresval_tol = -1.0\n", encoding="utf-8")
        with self.assertRaises(CommandError) as ctx:
            call_command("exp1", "--config", str(bad), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_failed_runs_exit_1(self):
        out = self.make_dir()
        with self.assertRaises(CommandError) as ctx:
            call_command(
                "exp1", "--out", str(out), "--tau", "0.001", "--n", "2", "--instances", "1", "--inits", "1",
                stdout=StringIO(),
            )
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertTrue((out / "exp1" / "manifest.json").exists())

    def test_plot_missing_csv(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("plot", str(self.make_dir() / "missing.csv"), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_plot_overlays_a_trace_directory(self):
        out = self.make_dir()
        call_command(
            "exp1", "--out", str(out), "--tau", "0.5", "--n", "3", "--instances", "2", "--inits", "2",
            "--no-ledger", stdout=StringIO(),
        )
        tau_dir = out / "exp1" / "tau_0.5"
        call_command("plot", str(tau_dir), stdout=StringIO())
        svg = (tau_dir / "overlay.svg").read_text(encoding="utf-8")
        self.assertEqual(svg.count("<polyline"), 2)
