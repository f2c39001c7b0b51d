import argparse
import logging
import sys

from pydantic import ValidationError

from drc_voxel import __version__
from drc_voxel.controllers import evaluate, fit, fuse, gradcheck, render, repro, shape, sweep
from drc_voxel.utils.errors import DrcError
from drc_voxel.utils.settings import DEFAULT_DETERMINISTIC, DEFAULT_LOG_LEVEL, DEFAULT_THREADS, DEFAULTS

logger = logging.getLogger("drc_voxel")

CONTROLLERS = (shape, render, fit, fuse, evaluate, gradcheck, repro, sweep)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drc", description="Differentiable ray consistency on voxel occupancy grids.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="workers for ray evaluation (DRC_THREADS)")
    parser.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=DEFAULT_DETERMINISTIC,
                        help="sequential, fixed-order reductions (DRC_DETERMINISTIC)")
    parser.add_argument("--quiet", action="store_true", help="no progress bars, warnings only")
    parser.add_argument("--log-level", default=DEFAULT_LOG_LEVEL)
    parser.add_argument("--show-defaults", action="store_true", help="print the numeric defaults table and exit")
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)
    for controller in CONTROLLERS:
        controller.register(subparsers)
    return parser


def show_defaults() -> int:
    for name in sorted(DEFAULTS):
        print(f"{name}\t{DEFAULTS[name]}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else str(args.log_level).upper()
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s %(message)s")

    if args.show_defaults:
        return show_defaults()
    if not args.command:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return 1
    if args.threads < 1:
        print(f"error: --threads must be >= 1, got {args.threads}", file=sys.stderr)
        return 1

    try:
        return args.handler(args)
    except DrcError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (ValidationError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception("[drc] command=%s failed", args.command)
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
