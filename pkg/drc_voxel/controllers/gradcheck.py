import argparse
import logging

from drc_voxel.controllers.options import write_lines
from drc_voxel.services.gradcheck import GRADCHECK_KINDS, check_ray_gradients
from drc_voxel.utils.errors import CheckFailure
from drc_voxel.utils.settings import DEFAULTS

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    parser.add_argument("--kind", choices=GRADCHECK_KINDS + ("all",), default="all")
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    parser.add_argument("--rtol", type=float, default=DEFAULTS["gradcheck_rtol"])
    parser.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    parser.set_defaults(handler=gradcheck_controller)


def gradcheck_controller(args) -> int:
    kinds = GRADCHECK_KINDS if args.kind == "all" else (args.kind,)
    failed = []
    lines = []
    for kind in kinds:
        report = check_ray_gradients(kind, args.trials, args.seed, rtol=args.rtol, inject_bug=args.inject_bug)
        lines += report.lines()
        if not report.passed:
            failed.append(kind)
    write_lines(lines)
    if failed:
        raise CheckFailure(f"gradient check failed for {', '.join(failed)}")
    return 0
