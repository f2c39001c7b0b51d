import logging
from pathlib import Path

import numpy as np

from drc_voxel.controllers.options import GT_AUX, GT_GRID, add_geometry_args, geometry_from_args, parse_dims
from drc_voxel.services.shapes import SCENE_NAMES, SHAPE_NAMES, make_test_scene, make_test_shape, seat_cavity
from drc_voxel.utils.errors import UsageError
from drc_voxel.utils.grid_io import write_binary_grid, write_grid
from drc_voxel.utils.manifest import RunManifest, write_manifest
from drc_voxel.utils.settings import DEFAULTS

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("shape", help="write a procedural ground-truth grid")
    parser.add_argument("--name", required=True, help=f"one of {', '.join(SHAPE_NAMES + SCENE_NAMES)}")
    parser.add_argument("--aux", choices=("color", "semantics"), default="color")
    parser.add_argument("--num-classes", type=int, default=DEFAULTS["num_classes"])
    parser.add_argument("--out", required=True)
    add_geometry_args(parser)
    parser.set_defaults(handler=shape_controller)


def shape_controller(args) -> int:
    """Write ``gt.grid`` (binary) and ``gt_aux.grid`` (0/1 emptiness + aux payload)."""
    out = Path(args.out)
    if args.name in SCENE_NAMES:
        args.geometry = "frustum"
        binary, aux = make_test_scene(geometry_from_args(args), args.num_classes, args.name)
    elif args.name in SHAPE_NAMES:
        geometry = geometry_from_args(args) if (args.aabb or args.like) else None
        dims = geometry.dims if geometry else (parse_dims(args.dims) if args.dims else DEFAULTS["grid_dims"])
        aabb = (geometry.aabb_min, geometry.aabb_max) if geometry else None
        binary, aux = make_test_shape(args.name, dims, aabb=aabb, aux_kind=args.aux, num_classes=args.num_classes)
    else:
        raise UsageError(f"unknown shape {args.name!r}; expected one of {', '.join(SHAPE_NAMES + SCENE_NAMES)}")

    if args.name == "chair_like":
        cavity = seat_cavity(binary.geometry)
        assert cavity.any() and not np.any(binary.occ[cavity]), "chair_like seat cavity must be empty"
        logger.info("[shape] cavity_cells=%d", int(cavity.sum()))

    out.mkdir(parents=True, exist_ok=True)
    write_binary_grid(out / GT_GRID, binary)
    write_grid(out / GT_AUX, binary.as_occupancy_grid(), aux)
    write_manifest(out, RunManifest(
        command="shape",
        parameters={"name": args.name, "dims": list(binary.geometry.dims), "aux": aux.kind, "num_classes": args.num_classes},
        outputs=[str(out / GT_GRID), str(out / GT_AUX)],
    ))
    logger.info("[shape] name=%s dims=%s occupied=%d out=%s", args.name, binary.geometry.dims, int(binary.occ.sum()), out)
    return 0
