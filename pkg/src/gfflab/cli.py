"""Command line driver.

    gfflab <experiment> --config <path> [--seed S] [--out DIR]
                        [--replicas R] [--threads T]
    gfflab validate --config <path>

Exit codes: 0 ok, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import SCHEMAS, ConfigError, ExperimentConfig, load_config, validate
from .experiments import run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfflab",
        description="Zero-average Gaussian field / level-set percolation laboratory")
    parser.add_argument("experiment",
                        help=f"one of {sorted(SCHEMAS)} or 'validate'")
    parser.add_argument("--config", required=True, help="path to a 'key = value' file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--replicas", type=int, default=None,
                        help="override the config replica count")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for replica-parallel experiments "
                             "(results are independent of this setting)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    validate_only = args.experiment == "validate"
    if not validate_only:
        config = ExperimentConfig(args.experiment, config.params)
    elif not config.experiment:
        print("config error: 'validate' needs an 'experiment = <name>' line "
              "in the config file", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        config.params["seed"] = args.seed
    if args.replicas is not None:
        config.params["replicas"] = args.replicas

    problems = validate(config)
    if validate_only:
        for problem in problems:
            print(problem)
        print("ok" if not problems else f"{len(problems)} problem(s)")
        return EXIT_OK if not problems else EXIT_CONFIG
    if problems:
        for problem in problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        manifest = run(config, args.out, threads=args.threads)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
