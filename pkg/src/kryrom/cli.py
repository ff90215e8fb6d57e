"""Command-line entry point: ``kryrom <experiment> [options]``."""
from __future__ import annotations

import argparse
import sys

from .bench import run_experiment
from .config import EXPERIMENTS, ConfigError, build_config, parse_levels, read_config_file
from .rom import DT_RULES, METHODS, PipelineError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kryrom", description="Krylov reduced-order heat equation experiments.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file; flags override its entries")
        p.add_argument("--out", help="output directory (default: results)")
        p.add_argument("--dim", type=int, choices=(2, 3))
        p.add_argument("--degree", type=int, choices=(1, 2))
        p.add_argument("--levels", type=parse_levels, help="level range 'a..b' or a single level")
        p.add_argument("--ell", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--tol-svd", dest="tol_svd", type=float)
        p.add_argument("--dt-rule", dest="dt_rule", choices=DT_RULES)
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--source")
        p.add_argument("--m", type=int, help="number of Chebyshev nodes for time-dependent sources")
        p.add_argument("--dump-mesh", dest="dump_mesh", action="store_true", default=None,
                       help="also write each mesh as text")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = vars(args).copy()
    config_path = overrides.pop("config")
    try:
        file_values = read_config_file(config_path) if config_path else {}
        if "experiment" in file_values and file_values["experiment"] != args.experiment:
            raise ConfigError(
                f"config file is for {file_values['experiment']!r}, command is {args.experiment!r}")
        cfg = build_config(file_values, overrides)
    except (ConfigError, OSError) as exc:
        print(f"kryrom: error [config]: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run_experiment(cfg)
    except PipelineError as exc:
        print(f"kryrom: error {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - unlabelled failure still gets a phase tag
        print(f"kryrom: error [run] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{cfg.experiment}: wrote {cfg.out}/{manifest['table']} ({manifest['total_seconds']:.2f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
