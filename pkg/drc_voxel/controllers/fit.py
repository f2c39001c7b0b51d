import logging
from pathlib import Path

from drc_voxel.controllers.options import add_fit_args, add_geometry_args, fit_config_from_args, geometry_from_args, write_lines
from drc_voxel.services.fitter import fit
from drc_voxel.services.observation import KINDS
from drc_voxel.utils.bundle import read_bundles
from drc_voxel.utils.errors import UsageError
from drc_voxel.utils.grid_io import write_grid
from drc_voxel.utils.manifest import RunManifest, write_manifest

logger = logging.getLogger(__name__)

FIT_GRID = "fit.grid"
LOSS_LOG = "loss.tsv"


def register(subparsers) -> None:
    parser = subparsers.add_parser("fit", help="fit an occupancy grid to observation bundles")
    parser.add_argument("--obs", required=True, help="directory of observation bundles")
    parser.add_argument("--kind", choices=KINDS + ("mixed",), default=None,
                        help="defaults to the bundles' kind; mask and depth bundles may be mixed")
    parser.add_argument("--views", type=int, default=None, help="use only the first N bundles")
    parser.add_argument("--out", required=True)
    add_geometry_args(parser)
    add_fit_args(parser)
    parser.set_defaults(handler=fit_controller)


def fit_controller(args) -> int:
    observations = read_bundles(args.obs)
    if args.views is not None:
        if args.views < 1:
            raise UsageError(f"--views must be >= 1, got {args.views}")
        observations = observations[: args.views]
    geometry = geometry_from_args(args)
    config = fit_config_from_args(args)
    grid, aux, report = fit(observations, geometry, args.kind, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_grid(out / FIT_GRID, grid, aux)
    write_lines(report.loss_log_lines(), out / LOSS_LOG)
    write_manifest(out, RunManifest(
        command="fit",
        parameters={
            "kind": args.kind,
            "views": len(observations),
            "geometry": geometry.model_dump(mode="json"),
            "config": config.model_dump(mode="json", exclude={"progress"}),
        },
        seeds={"rays": config.seed},
        inputs=[str(args.obs)],
        outputs=[str(out / FIT_GRID), str(out / LOSS_LOG)],
    ))
    if report.losses:
        logger.info("[fit] final_loss=%.6g wall_time=%.2fs out=%s", report.losses[-1], report.wall_time, out)
    return 0
