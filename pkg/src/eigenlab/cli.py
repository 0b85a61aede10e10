"""Command-line front end.

Subcommands: pipeline, perturb-sweep, bound-study, uniqueness, spectrum,
mesh-info. Exit codes: 0 success, 1 module error (error name on stderr),
2 usage/config error.
"""

import argparse
import logging
import os
import sys

from .config import parse_config
from .errors import ConfigError, LabError
from . import experiments

SUBCOMMANDS = ("pipeline", "perturb-sweep", "bound-study", "uniqueness",
               "spectrum", "mesh-info")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eigenlab",
        description="Energy-minimizing maps to spheres and conformally "
                    "extremal metrics on discretized closed manifolds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=0, help="base seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        if name == "mesh-info":
            p.add_argument("--dump", default=None, help="write the mesh text format here")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stdout,
    )
    try:
        cfg = parse_config(args.config)
        out_dir = args.out or cfg.out_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "pipeline":
            experiments.cmd_pipeline(cfg, out_dir)
        elif args.command == "perturb-sweep":
            experiments.cmd_perturb_sweep(cfg, out_dir, args.seed)
        elif args.command == "bound-study":
            experiments.cmd_bound_study(cfg, out_dir, args.seed)
        elif args.command == "uniqueness":
            experiments.cmd_uniqueness(cfg, out_dir, args.seed)
        elif args.command == "spectrum":
            experiments.cmd_spectrum(cfg, out_dir)
        elif args.command == "mesh-info":
            info = experiments.cmd_mesh_info(cfg, out_dir, args.dump)
            if not args.quiet:
                print(info)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except LabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
