"""Procedural ground-truth shapes on uniform grids and a street scene on frustum grids.

Shapes are defined in normalized coordinates of the grid box, centred at 0
with unit extent, y up. Each comes with a piecewise-constant color or
semantic payload; class ``num_classes - 1`` is reserved for background.
"""

from typing import Callable, Dict, Tuple

import numpy as np

from drc_voxel.services.grid import AuxGrid, BinaryGrid, GridGeometry, make_uniform_geometry, unit_cube
from drc_voxel.utils.errors import DataError

SHAPE_NAMES = ("sphere", "cuboid", "chair_like")

SPHERE_RADIUS = 0.4
UPPER_COLOR = (0.9, 0.2, 0.2)
LOWER_COLOR = (0.2, 0.3, 0.9)

# chair_like: a tray seat with side/front rims and a backrest, on four legs
SEAT_FLOOR = (-0.12, -0.05)
RIM_TOP = 0.08
RIM_WIDTH = 0.08
HALF_WIDTH = 0.35
BACK_TOP = 0.45
LEG_BOTTOM = -0.45
LEG_WIDTH = 0.1


def _normalized_centers(geometry: GridGeometry) -> np.ndarray:
    lo = np.asarray(geometry.aabb_min)
    hi = np.asarray(geometry.aabb_max)
    return (geometry.cell_centers() - 0.5 * (lo + hi)) / (hi - lo)


def _sphere(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    occ = np.linalg.norm(p, axis=-1) <= SPHERE_RADIUS
    part = np.where(p[:, 1] >= 0.0, 0, 1)
    return occ, part


def _cuboid(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    occ = (np.abs(p[:, 0]) <= 0.35) & (np.abs(p[:, 1]) <= 0.2) & (np.abs(p[:, 2]) <= 0.25)
    part = np.where(p[:, 1] >= 0.1, 0, 1)
    return occ, part


def _chair_parts(p: np.ndarray) -> Dict[str, np.ndarray]:
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    in_footprint = (np.abs(x) <= HALF_WIDTH) & (np.abs(z) <= HALF_WIDTH)
    seat = in_footprint & (y >= SEAT_FLOOR[0]) & (y <= SEAT_FLOOR[1])
    rim_band = (y > SEAT_FLOOR[1]) & (y <= RIM_TOP) & in_footprint
    rim = rim_band & (
        (np.abs(x) >= HALF_WIDTH - RIM_WIDTH) | (z <= -HALF_WIDTH + RIM_WIDTH)
    )
    back = (np.abs(x) <= HALF_WIDTH) & (z >= HALF_WIDTH - RIM_WIDTH) & (z <= HALF_WIDTH) \
        & (y > SEAT_FLOOR[1]) & (y <= BACK_TOP)
    leg_x = np.abs(x) >= HALF_WIDTH - LEG_WIDTH
    leg_z = np.abs(z) >= HALF_WIDTH - LEG_WIDTH
    legs = in_footprint & leg_x & leg_z & (y >= LEG_BOTTOM) & (y < SEAT_FLOOR[0])
    cavity = rim_band & ~rim & ~back
    return {"seat": seat | rim, "back": back, "legs": legs, "cavity": cavity}


def _chair_like(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    parts = _chair_parts(p)
    occ = parts["seat"] | parts["back"] | parts["legs"]
    part = np.where(parts["back"], 0, np.where(parts["seat"], 1, 2))
    return occ, part


_BUILDERS: Dict[str, Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = {
    "sphere": _sphere,
    "cuboid": _cuboid,
    "chair_like": _chair_like,
}

_PART_COLORS = np.array([UPPER_COLOR, LOWER_COLOR, (0.3, 0.8, 0.3)])


def make_test_shape(
    name: str,
    dims,
    *,
    aabb=None,
    aux_kind: str = "color",
    num_classes: int = 4,
) -> Tuple[BinaryGrid, AuxGrid]:
    if name not in _BUILDERS:
        raise DataError(f"unknown shape {name!r}; expected one of {', '.join(SHAPE_NAMES)}")
    geometry = make_uniform_geometry(dims, aabb or unit_cube())
    if min(geometry.dims) < 8:
        raise DataError(f"test shapes need dims >= 8 per axis, got {geometry.dims}")
    occ, part = _BUILDERS[name](_normalized_centers(geometry))
    if aux_kind == "color":
        payload = _PART_COLORS[part]
    elif aux_kind == "semantics":
        if num_classes < 2:
            raise DataError("semantic shapes need at least 2 classes (one is background)")
        labels = np.minimum(part, num_classes - 2)
        payload = np.zeros((geometry.num_cells, num_classes))
        payload[np.arange(geometry.num_cells), labels] = 1.0
    else:
        raise DataError(f"unknown aux kind {aux_kind!r}")
    return BinaryGrid(geometry, occ), AuxGrid(geometry, aux_kind, payload)


def seat_cavity(geometry: GridGeometry) -> np.ndarray:
    """Cells of the chair_like seat cavity: empty, open at the top, walled on four sides."""
    return _chair_parts(_normalized_centers(geometry))["cavity"]


def is_laterally_enclosed(binary: BinaryGrid, index: int) -> bool:
    """True if walking along +-x and +-z from an empty cell hits an occupied cell each way."""
    nx, ny, nz = binary.geometry.dims
    volume = binary.occ.reshape(nz, ny, nx)
    ix, iy, iz = (int(v) for v in binary.geometry.unravel(index))
    if volume[iz, iy, ix]:
        return False
    row = volume[iz, iy, :]
    col = volume[:, iy, ix]
    return bool(row[:ix].any() and row[ix + 1:].any() and col[:iz].any() and col[iz + 1:].any())


# street: camera at the frustum apex, 1.5 m above a flat road (world y points down)
SCENE_NAMES = ("street",)
CAMERA_HEIGHT = 1.5
BUILDING = {"x": (4.0, 12.0), "y": (-8.0, CAMERA_HEIGHT), "z": (8.0, 60.0)}
CAR = {"x": (-3.0, -1.2), "y": (0.0, CAMERA_HEIGHT), "z": (9.0, 13.5)}


def _inside(p: np.ndarray, box: Dict[str, Tuple[float, float]]) -> np.ndarray:
    out = np.ones(p.shape[0], dtype=bool)
    for axis, key in enumerate("xyz"):
        lo, hi = box[key]
        out &= (p[:, axis] >= lo) & (p[:, axis] <= hi)
    return out


def make_test_scene(geometry: GridGeometry, num_classes: int = 4, name: str = "street") -> Tuple[BinaryGrid, AuxGrid]:
    """Semantic scene on a frustum grid: road (class 0), building (1), car (2)."""
    if name not in SCENE_NAMES:
        raise DataError(f"unknown scene {name!r}; expected one of {', '.join(SCENE_NAMES)}")
    if geometry.kind != "frustum":
        raise DataError("scenes live on frustum grids")
    if num_classes < 2:
        raise DataError("semantic scenes need at least 2 classes (one is background)")
    p = geometry.cell_centers()
    road = p[:, 1] >= CAMERA_HEIGHT
    building = _inside(p, BUILDING) & ~road
    car = _inside(p, CAR) & ~road
    part = np.where(road, 0, np.where(building, 1, 2))
    labels = np.minimum(part, num_classes - 2)
    payload = np.zeros((geometry.num_cells, num_classes))
    payload[np.arange(geometry.num_cells), labels] = 1.0
    return BinaryGrid(geometry, road | building | car), AuxGrid(geometry, "semantics", payload)
