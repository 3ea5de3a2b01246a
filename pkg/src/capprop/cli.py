"""Command-line front end.

    capprop run|compare|sweep --config <path> --out <dir> [--seed <u64>]
        [--jobs <k>] [--no-plots] [--format table|report|both]

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

from . import experiments, output
from .config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
SEED_ENV = "CAPPROP_SEED"


def _parse_seed(text: str, name: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise ConfigError(name, f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise ConfigError(name, "seed must lie in [0, 2^64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capprop", description="Capacity propagation studies.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run the study named in the config",
        "compare": "run one architecture next to its continuum counterpart",
        "sweep": "run a sweep study and print its fitted exponents",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML or JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", default=None, help=f"u64 seed (falls back to config, then ${SEED_ENV}, then 0)")
        p.add_argument("--jobs", type=int, default=1, help="max concurrent sweep points")
        p.add_argument("--no-plots", action="store_true", help="skip SVG plots")
        p.add_argument("--format", choices=output.FORMATS, default="both")
    return parser


def _load(args):
    seed = None if args.seed is None else _parse_seed(args.seed, "--seed")
    env = os.environ.get(SEED_ENV)
    fallback = None if env in (None, "") else _parse_seed(env, SEED_ENV)
    if args.jobs < 1:
        raise ConfigError("--jobs", "must be >= 1")
    return load_config(args.config, seed=seed, fallback_seed=fallback)


def _execute(args) -> int:
    cfg = _load(args)
    start = time.perf_counter()
    profiles = None
    if args.command == "compare":
        report, profiles = experiments.run_compare(cfg, args.jobs)
    else:
        if cfg.study == "compare":
            raise ConfigError("study", f"'{args.command}' needs a study, use 'capprop compare' for compare configs")
        report = experiments.run_study(cfg, args.jobs)
    runtime = time.perf_counter() - start
    files = output.build_bundle(report, args.format, plots=not args.no_plots, profiles=profiles)
    out = output.write_bundle(args.out, files, runtime)
    if args.command == "sweep":
        for name, fit in report.fits.items():
            print(f"{name}: exponent={fit['exponent']:.6g} r2={fit['r2']:.6g}")
        for c in report.classifications:
            print(f"p={c['p']}: {c['verdict']} (exponent={c['exponent']}, predicted={c['predicted']})")
    print(f"wrote {len(files) + 1} files to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _execute(args)
    except ConfigError as exc:
        print(f"capprop: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"capprop: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
