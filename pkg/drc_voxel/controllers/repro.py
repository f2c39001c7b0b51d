import logging
from pathlib import Path

from drc_voxel.controllers.options import add_fit_args, fit_config_from_args, write_lines
from drc_voxel.services.experiments import REPRO_SETTINGS, repro_shape
from drc_voxel.services.shapes import SHAPE_NAMES
from drc_voxel.utils.errors import UsageError
from drc_voxel.utils.grid_io import write_grid
from drc_voxel.utils.manifest import RunManifest, write_manifest
from drc_voxel.utils.settings import DEFAULTS

logger = logging.getLogger(__name__)

TABLE = "repro.tsv"


def register(subparsers) -> None:
    parser = subparsers.add_parser("repro", help="mask / depth / noisy-depth reconstruction table")
    parser.add_argument("--shapes", default="sphere,chair_like")
    parser.add_argument("--dims", type=int, default=DEFAULTS["grid_dims"])
    parser.add_argument("--views", type=int, default=DEFAULTS["views"])
    parser.add_argument("--noise", type=float, default=0.2, help="max depth noise for the noisy columns (m)")
    parser.add_argument("--out", required=True)
    add_fit_args(parser)
    parser.set_defaults(handler=repro_controller)


def repro_controller(args) -> int:
    shapes = [s for s in args.shapes.split(",") if s]
    unknown = [s for s in shapes if s not in SHAPE_NAMES]
    if unknown or not shapes:
        raise UsageError(f"--shapes takes names from {', '.join(SHAPE_NAMES)}, got {args.shapes!r}")
    # the table must be reproducible bit for bit
    args.deterministic = True
    config = fit_config_from_args(args)
    out = Path(args.out)
    rows = ["\t".join(("shape",) + REPRO_SETTINGS)]
    outputs = []
    for shape in shapes:
        results = repro_shape(shape, args.dims, args.views, args.noise, config, args.seed)
        for setting, rec in results.items():
            outputs.append(str(write_grid(out / shape / f"{setting}.grid", rec.grid, rec.aux)))
            if rec.report is not None:
                log = out / shape / f"{setting}.loss.tsv"
                write_lines(rec.report.loss_log_lines(), log)
                outputs.append(str(log))
        rows.append("\t".join([shape] + [f"{results[s].iou.best_iou:.4f}" for s in REPRO_SETTINGS]))
    write_lines(rows, out / TABLE)
    write_lines(rows)
    write_manifest(out, RunManifest(
        command="repro",
        parameters={
            "shapes": shapes,
            "dims": args.dims,
            "views": args.views,
            "noise": args.noise,
            "config": config.model_dump(mode="json", exclude={"progress"}),
        },
        seeds={"views": args.seed, "noise": args.seed, "rays": args.seed},
        outputs=[str(out / TABLE)] + outputs,
    ))
    return 0
