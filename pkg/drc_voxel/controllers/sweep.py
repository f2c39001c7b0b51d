import logging
from pathlib import Path

from drc_voxel.controllers.options import add_fit_args, fit_config_from_args, parse_floats, write_lines
from drc_voxel.services.experiments import NOISE_SWEEP, VIEW_SWEEP, noise_sweep, view_sweep
from drc_voxel.services.shapes import SHAPE_NAMES
from drc_voxel.utils.errors import UsageError
from drc_voxel.utils.manifest import RunManifest, write_manifest
from drc_voxel.utils.settings import DEFAULTS

logger = logging.getLogger(__name__)

TABLE = "sweep.tsv"


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="IoU against depth noise or view count")
    parser.add_argument("--over", choices=("noise", "views"), required=True)
    parser.add_argument("--values", default=None, help="comma-separated settings to sweep")
    parser.add_argument("--shape", choices=SHAPE_NAMES, default="sphere")
    parser.add_argument("--dims", type=int, default=DEFAULTS["grid_dims"])
    parser.add_argument("--views", type=int, default=DEFAULTS["views"], help="views per fit in a noise sweep")
    parser.add_argument("--out", required=True)
    add_fit_args(parser)
    parser.set_defaults(handler=sweep_controller)


def sweep_controller(args) -> int:
    config = fit_config_from_args(args)
    if args.over == "noise":
        values = parse_floats(args.values) if args.values else list(NOISE_SWEEP)
        rows = noise_sweep(args.shape, args.dims, args.views, values, config, args.seed)
        lines = ["noise\tdrc_iou\tfusion_iou"]
        lines += [f"{r['value']:g}\t{r['drc_iou']:.4f}\t{r['fusion_iou']:.4f}" for r in rows]
    else:
        values = [int(v) for v in parse_floats(args.values)] if args.values else list(VIEW_SWEEP)
        if not values:
            raise UsageError("--values is empty")
        rows = view_sweep(args.shape, args.dims, values, config, args.seed)
        lines = ["views\tdrc_iou"]
        lines += [f"{r['value']}\t{r['drc_iou']:.4f}" for r in rows]
    out = Path(args.out)
    write_lines(lines, out / TABLE)
    write_lines(lines)
    write_manifest(out, RunManifest(
        command="sweep",
        parameters={"over": args.over, "values": values, "shape": args.shape, "dims": args.dims,
                    "views": args.views, "config": config.model_dump(mode="json", exclude={"progress"})},
        seeds={"views": args.seed, "noise": args.seed, "rays": args.seed},
        outputs=[str(out / TABLE)],
    ))
    return 0
