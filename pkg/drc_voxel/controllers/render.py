import logging
from functools import partial
from pathlib import Path

import numpy as np
from tqdm import tqdm

from drc_voxel.controllers.options import load_ground_truth, parse_floats, show_progress
from drc_voxel.services.camera import Camera, forward_cameras
from drc_voxel.services.observation import KINDS
from drc_voxel.services.renderer import add_depth_noise, render, render_expected, sample_view_ring
from drc_voxel.utils.bundle import view_dir, write_bundle
from drc_voxel.utils.grid_io import read_grid
from drc_voxel.utils.manifest import RunManifest, write_manifest
from drc_voxel.utils.settings import DEFAULTS, ESCAPE_DEPTH_OBJECT, ESCAPE_DEPTH_SCENE

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("render", help="render observation bundles of a ground-truth grid")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--grid", help="binary grid file or shape output directory")
    source.add_argument("--pred", help="fitted occupancy grid; renders expectations over ray termination")
    parser.add_argument("--aux", default=None, help="grid file carrying the aux payload (defaults to the --pred file)")
    parser.add_argument("--kind", choices=KINDS, default="depth")
    parser.add_argument("--views", type=int, default=DEFAULTS["views"])
    parser.add_argument("--noise", type=float, default=DEFAULTS["noise"], help="max uniform depth noise (m)")
    parser.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    parser.add_argument("--image-size", type=int, default=DEFAULTS["image_size"])
    parser.add_argument("--hfov", type=float, default=DEFAULTS["camera_hfov"])
    parser.add_argument("--radius", type=float, default=DEFAULTS["camera_radius"])
    parser.add_argument("--elevation-min", type=float, default=DEFAULTS["elevation_min"])
    parser.add_argument("--elevation-max", type=float, default=DEFAULTS["elevation_max"])
    parser.add_argument("--escape-depth", type=float, default=None)
    parser.add_argument("--forward", default="0", help="frustum grids: camera offsets along the optical axis (m)")
    parser.add_argument("--out", required=True)
    parser.set_defaults(handler=render_controller)


def apex_camera(geometry, width: int) -> Camera:
    """Identity camera at a frustum grid's apex, with the grid's field of view."""
    nx, ny, _ = geometry.dims
    height = max(1, int(round(width * ny / nx)))
    fu = (width / 2.0) / (geometry.f * nx / 2.0)
    return Camera(
        model="perspective",
        width=width,
        height=height,
        intrinsics=(fu, fu, width / 2.0, height / 2.0),
        rotation=(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0),
        translation=(0.0, 0.0, 0.0),
    )


def _load_source(args):
    """(geometry, render function) for a ground-truth grid or a fitted one."""
    if args.grid:
        binary, aux = load_ground_truth(args.grid, args.aux)
        return binary.geometry, partial(render, binary, aux)
    grid, aux, _ = read_grid(args.pred)
    if args.aux:
        _, aux, _ = read_grid(args.aux)
    return grid.geometry, partial(render_expected, grid, aux)


def render_controller(args) -> int:
    geometry, render_view = _load_source(args)
    if args.escape_depth is not None:
        escape_depth = args.escape_depth
    else:
        escape_depth = ESCAPE_DEPTH_SCENE if args.kind == "depth_semantics" else ESCAPE_DEPTH_OBJECT

    if geometry.kind == "frustum":
        cameras = forward_cameras(apex_camera(geometry, args.image_size), parse_floats(args.forward))
    else:
        cameras = sample_view_ring(
            args.views,
            (args.elevation_min, args.elevation_max),
            args.radius,
            args.seed,
            image_size=args.image_size,
            hfov=args.hfov,
            target=0.5 * (np.asarray(geometry.aabb_min) + np.asarray(geometry.aabb_max)),
        )

    out = Path(args.out)
    written = []
    for i, camera in enumerate(tqdm(cameras, desc="render", unit="view", disable=not show_progress(args))):
        obs = render_view(camera, args.kind, escape_depth=escape_depth)
        if args.noise > 0:
            obs = add_depth_noise(obs, args.noise, args.seed, stream=i)
        written.append(str(write_bundle(view_dir(out, i), obs)))
    write_manifest(out, RunManifest(
        command="render",
        parameters={
            "kind": args.kind,
            "source": "grid" if args.grid else "pred",
            "views": len(cameras),
            "noise": args.noise,
            "image_size": args.image_size,
            "hfov": args.hfov,
            "radius": args.radius,
            "elevation": [args.elevation_min, args.elevation_max],
            "escape_depth": escape_depth,
        },
        seeds={"views": args.seed, "noise": args.seed},
        inputs=[str(args.grid or args.pred)] + ([str(args.aux)] if args.aux else []),
        outputs=written,
    ))
    logger.info("[render] kind=%s views=%d noise=%g out=%s", args.kind, len(cameras), args.noise, out)
    return 0
