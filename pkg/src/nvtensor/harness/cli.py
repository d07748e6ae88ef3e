"""Command line entry point: ``nvtensor run|validate|list-experiments``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from ..evolve.exact import CapacityError
from .config import ConfigError, ExperimentConfig, validate
from .csvio import NonFiniteError
from .experiments import EXPERIMENTS, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENGINE = 3
EXIT_NONFINITE = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nvtensor", description="Open-system NV ensemble simulations.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a YAML config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: $NVTENSOR_OUT, then the config's 'output')")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--threads", type=int, default=1, help="worker threads for independent grid points")

    check = sub.add_parser("validate", help="parse a config and check resource guards")
    check.add_argument("config")

    sub.add_parser("list-experiments", help="print the registered experiments")
    return p


def _load(path: str, seed: int | None = None) -> ExperimentConfig:
    try:
        config = ExperimentConfig.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if seed is not None:
        config = config.replace(seed=seed)
    validate(config)
    return config


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "list-experiments":
        for name, exp in EXPERIMENTS.items():
            print(f"{name:20s} {exp.description}")
        return EXIT_OK

    try:
        config = _load(args.config, getattr(args, "seed", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(f"ok {config.experiment} config={config.config_hash()}")
        return EXIT_OK

    if args.threads < 1:
        print("config error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.environ.get("NVTENSOR_OUT") or config.output
    try:
        record = run_experiment(config, out, threads=args.threads)
    except NonFiniteError as exc:
        print(f"non-finite output: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (ConfigError, CapacityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if record.failures:
        for msg in record.failures:
            print(f"engine failure: {msg}", file=sys.stderr)
        print(f"partial results in {out}", file=sys.stderr)
        return EXIT_ENGINE
    print(f"wrote {len(record.files)} files to {out} (config={record.config_hash}, {record.wall_time_s:.1f} s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
