import logging
from pathlib import Path

from drc_voxel.controllers.options import add_geometry_args, geometry_from_args
from drc_voxel.services.fusion import carve_masks, fuse_depth_counts
from drc_voxel.services.grid import BinaryGrid
from drc_voxel.utils.bundle import read_bundles
from drc_voxel.utils.grid_io import write_binary_grid, write_grid
from drc_voxel.utils.manifest import RunManifest, write_manifest

logger = logging.getLogger(__name__)

FUSED_GRID = "fused.grid"
VALID_GRID = "fused_valid.grid"
CARVED_GRID = "carved.grid"


def register(subparsers) -> None:
    parser = subparsers.add_parser("fuse", help="depth fusion (or silhouette carving) baseline")
    parser.add_argument("--obs", required=True, help="directory of observation bundles")
    parser.add_argument("--method", choices=("depth", "carve"), default="depth")
    parser.add_argument("--out", required=True)
    add_geometry_args(parser)
    parser.set_defaults(handler=fuse_controller)


def fuse_controller(args) -> int:
    observations = read_bundles(args.obs)
    geometry = geometry_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "carve":
        hull = carve_masks(observations, geometry)
        outputs = [write_binary_grid(out / CARVED_GRID, hull)]
        # emptiness-convention copy so eval can score it like any fitted grid
        outputs.append(write_grid(out / FUSED_GRID, hull.as_occupancy_grid(), tags={"source": "carve"}))
    else:
        fusion = fuse_depth_counts(observations, geometry)
        outputs = [
            write_grid(out / FUSED_GRID, fusion.as_occupancy_grid(), tags={"source": "fusion", "stored": "1-soft_occupancy"}),
            write_binary_grid(out / VALID_GRID, BinaryGrid(geometry, fusion.valid)),
        ]
    write_manifest(out, RunManifest(
        command="fuse",
        parameters={"method": args.method, "views": len(observations), "geometry": geometry.model_dump(mode="json")},
        inputs=[str(args.obs)],
        outputs=[str(p) for p in outputs],
    ))
    logger.info("[fuse] method=%s views=%d out=%s", args.method, len(observations), out)
    return 0
