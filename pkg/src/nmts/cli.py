"""Command-line entry point.

Subcommands:
    run       execute a preset or a JSON config file
    list      enumerate presets
    describe  echo one preset's parameters
    selftest  compare presets against the checked-in constants file

The default output directory is ``$NMTS_OUT_DIR`` (falling back to
``./nmts-out``), with one subdirectory per preset or config name.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError
from .harness import run_experiment
from .presets import describe_preset, get_preset, preset_names, selftest

logger = logging.getLogger(__name__)

FAILURE_BUDGET = 0.10


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmts", description="Likelihood-free estimation experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="preset name (see 'list')")
    src.add_argument("--config", help="path to a JSON config file")
    run_p.add_argument("--reps", type=int, default=None, help="override replication count")
    run_p.add_argument("--seed", type=int, default=None, help="override base seed")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--workers", type=int, default=1, help="replication worker processes")
    run_p.add_argument("--engine", choices=("jit", "python"), default="jit")

    sub.add_parser("list", help="list preset names")

    desc_p = sub.add_parser("describe", help="describe one preset")
    desc_p.add_argument("name")

    sub.add_parser("selftest", help="verify presets against the constants file")
    return parser


def _default_out(name: str) -> Path:
    root = Path(os.environ.get("NMTS_OUT_DIR", "nmts-out"))
    return root / name


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "list":
        for name in preset_names():
            print(name)
        return 0

    if args.command == "describe":
        try:
            print(describe_preset(args.name))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0

    if args.command == "selftest":
        problems = selftest()
        if problems:
            for p in problems:
                print(f"MISMATCH: {p}")
            return 1
        print(f"selftest ok: {len(preset_names())} presets match the constants file")
        return 0

    # run
    try:
        if args.preset:
            config = get_preset(args.preset, replications=args.reps, base_seed=args.seed)
            name = args.preset
        else:
            config = load_config(args.config)
            if args.reps is not None or args.seed is not None:
                data = config.to_dict()
                if args.reps is not None:
                    data["replications"] = args.reps
                if args.seed is not None:
                    data["base_seed"] = args.seed
                from .config import config_from_dict

                config = config_from_dict(data)
            name = Path(args.config).stem
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out) if args.out else (Path(config.out_dir) if config.out_dir else _default_out(name))
    manifest = run_experiment(config, out, workers=args.workers, engine=args.engine)
    print(f"wrote {out}")
    if manifest.failure_fraction > FAILURE_BUDGET:
        print(
            f"error: {len(manifest.failures)} of {manifest.n_runs} replications failed",
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
