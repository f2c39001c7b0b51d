"""Flag groups and small IO helpers shared by the subcommand controllers."""

import argparse
import sys
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from drc_voxel.services.fitter import FitConfig
from drc_voxel.services.grid import AuxGrid, BinaryGrid, GridGeometry, make_frustum_geometry, make_uniform_geometry
from drc_voxel.utils.errors import DataError, UsageError
from drc_voxel.utils.grid_io import read_binary_grid, read_grid, read_grid_header
from drc_voxel.utils.settings import DEFAULTS

GT_GRID = "gt.grid"
GT_AUX = "gt_aux.grid"


def parse_floats(raw: str, count: Optional[int] = None) -> List[float]:
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"expected comma-separated numbers, got {raw!r}") from e
    if count is not None and len(values) != count:
        raise UsageError(f"expected {count} comma-separated numbers, got {raw!r}")
    return values


def parse_dims(raw: str) -> Tuple[int, int, int]:
    try:
        parts = [int(v) for v in raw.split(",")]
    except ValueError as e:
        raise UsageError(f"dims must be N or NX,NY,NZ, got {raw!r}") from e
    if len(parts) == 1:
        return (parts[0],) * 3
    if len(parts) != 3:
        raise UsageError(f"dims must be N or NX,NY,NZ, got {raw!r}")
    return tuple(parts)


def add_geometry_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("grid geometry")
    group.add_argument("--geometry", choices=("uniform", "frustum"), default="uniform")
    group.add_argument("--dims", default=None, help="N or NX,NY,NZ")
    group.add_argument("--aabb", default=None, help="xmin,ymin,zmin,xmax,ymax,zmax (uniform)")
    group.add_argument("--z-min", type=float, default=DEFAULTS["frustum_z_min"])
    group.add_argument("--z-max", type=float, default=DEFAULTS["frustum_z_max"])
    group.add_argument("--grid-hfov", type=float, default=DEFAULTS["frustum_hfov"])
    group.add_argument("--like", default=None, help="copy the geometry of an existing grid file")


def geometry_from_args(args) -> GridGeometry:
    if args.like:
        _, geometry, _, _ = read_grid_header(args.like)
        return geometry
    if args.geometry == "frustum":
        dims = parse_dims(args.dims) if args.dims else tuple(DEFAULTS["frustum_dims"])
        return make_frustum_geometry(dims, args.z_min, args.z_max, args.grid_hfov)
    dims = parse_dims(args.dims) if args.dims else (DEFAULTS["grid_dims"],) * 3
    if args.aabb:
        values = parse_floats(args.aabb, 6)
        aabb = (tuple(values[:3]), tuple(values[3:]))
    else:
        aabb = ((DEFAULTS["grid_aabb_min"],) * 3, (DEFAULTS["grid_aabb_max"],) * 3)
    return make_uniform_geometry(dims, aabb)


def add_fit_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("fitting")
    group.add_argument("--iterations", type=int, default=DEFAULTS["iterations"])
    group.add_argument("--step-size", type=float, default=DEFAULTS["step_size"])
    group.add_argument("--rays", type=int, default=DEFAULTS["rays_per_iteration"], help="rays per iteration")
    group.add_argument("--views-per-iteration", type=int, default=DEFAULTS["views_per_iteration"])
    group.add_argument("--foreground-weight", type=float, default=DEFAULTS["foreground_weight"])
    group.add_argument("--semantic-weight", type=float, default=DEFAULTS["semantic_weight"])
    group.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    group.add_argument("--full-image", action="store_true", help="use every pixel each iteration")


def fit_config_from_args(args) -> FitConfig:
    return FitConfig(
        iterations=args.iterations,
        step_size=args.step_size,
        rays_per_iteration=args.rays,
        views_per_iteration=args.views_per_iteration,
        foreground_weight=args.foreground_weight,
        semantic_weight=args.semantic_weight,
        seed=args.seed,
        full_image=args.full_image,
        threads=args.threads,
        deterministic=args.deterministic,
        progress=show_progress(args),
    )


def show_progress(args) -> bool:
    return not args.quiet and sys.stderr.isatty()


def load_ground_truth(path, aux_path=None) -> Tuple[BinaryGrid, Optional[AuxGrid]]:
    """A binary grid plus optional aux; ``path`` may be a ``shape`` output directory."""
    path = Path(path)
    if path.is_dir():
        aux_path = aux_path or (path / GT_AUX if (path / GT_AUX).is_file() else None)
        path = path / GT_GRID
    if not path.is_file():
        raise FileNotFoundError(f"no grid file at {path}")
    binary = read_binary_grid(path)
    aux = None
    if aux_path is not None:
        _, aux, _ = read_grid(aux_path)
        if aux is None:
            raise DataError(f"{aux_path} carries no aux payload")
    return binary, aux


def write_lines(lines: Iterable[str], path=None) -> None:
    text = "\n".join(lines) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")
