# experiments/cli.py
"""Argument and error plumbing shared by the management commands."""
from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

from django.core.management.base import CommandError

from apps.core.exceptions import InvalidConfig, InvalidDims, SchemaMismatch
from experiments.config import RunConfig, load_config

EXIT_PARTIAL = 1
EXIT_INVALID_CONFIG = 2


def add_common_arguments(parser) -> None:
    parser.add_argument("--config", type=str, default=None, help="TOML file (default: SOLVER_CONFIG).")
    parser.add_argument("--seed", type=int, default=None, help="Master seed.")
    parser.add_argument("--out", type=str, default=None, help="Output directory (default: SOLVER_OUTPUT_ROOT).")


def add_solver_arguments(parser) -> None:
    parser.add_argument("--max-iters", type=int, default=None, help="Cap on outer iterations.")
    parser.add_argument("--resval-tol", type=float, default=None, help="Stop once Res.val is at most this.")
    parser.add_argument("--beta", type=float, default=None, help="Step size for both players.")


def solver_overrides(opts) -> dict:
    return {
        "max_outer_iters": opts.get("max_iters"),
        "resval_tol": opts.get("resval_tol"),
        "beta_x": opts.get("beta"),
        "beta_y": opts.get("beta"),
    }


def out_dir(opts) -> Path | None:
    return Path(opts["out"]).expanduser() if opts.get("out") else None


@contextmanager
def config_errors():
    """Turn configuration and input problems into exit code 2."""
    try:
        yield
    except (InvalidConfig, InvalidDims, SchemaMismatch) as exc:
        raise CommandError(f"invalid configuration: {exc}", returncode=EXIT_INVALID_CONFIG) from exc


def read_config(opts) -> RunConfig:
    with config_errors():
        return load_config(opts.get("config"))
