"""Command-line interface: ``abdipole run <scenario>`` and ``abdipole schema``."""

from __future__ import annotations

import argparse
import json
import sys

from ._version import __version__
from .errors import ConvergenceError, ValidationError
from .runner import EXIT_CONVERGENCE, EXIT_IO, EXIT_OK, EXIT_VALIDATION, run
from .scenario import SCHEMA, load_scenario


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must fit in an unsigned 64-bit integer")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="abdipole", description="Dipole-chain phase scenarios.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a scenario file")
    r.add_argument("scenario", help="YAML scenario file")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--format", choices=("csv", "json", "both"), default="both")
    r.add_argument("--workers", type=_positive_int, default=1)
    r.add_argument("--oracle", action="store_true",
                   help="cross-check adiabatic against exact evolution")
    r.add_argument("--seed", type=_u64, default=None)
    r.add_argument("--tolerance-scale", type=_positive_float, default=1.0)
    sub.add_parser("schema", help="print the scenario JSON schema")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(SCHEMA, indent=2))
        return EXIT_OK
    try:
        config = load_scenario(args.scenario)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    formats = ("csv", "json") if args.format == "both" else (args.format,)
    try:
        report = run(config, args.out, formats, args.workers, args.oracle,
                     args.tolerance_scale, args.seed)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for e in report.errors:
        print(f"error [{e['analysis']} @ sweep {e['sweep_index']}, setting {e['setting']}]: "
              f"{e['type']}: {e['message']}", file=sys.stderr)
    print(f"wall clock {report.wall_clock_s:.3f} s; wrote {len(report.files)} files to {args.out}",
          file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
