"""Voxel grid geometries and the fields stored on them.

Two geometries are supported. ``uniform`` is an axis-aligned box split into
equal cells. ``frustum`` is a camera-centred grid whose cells are uniform in
image projection and grow exponentially with depth: grid coordinates
(x, y, z) in [0,nx]x[0,ny]x[0,nz] map to the world point

    alpha1 * exp(alpha2 * z) * (f * (x - nx/2), f * (y - ny/2), 1)

All fields are flat float64 / bool arrays in x-fastest order,
linear index = (iz * ny + iy) * nx + ix.

NOTE: ``OccupancyGrid.x`` is the probability that a cell is EMPTY.
"""

import math
from dataclasses import dataclass, field
from typing import List, Literal, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from drc_voxel.utils.errors import DataError, DomainError, GeometryMismatchError

Vec3 = Tuple[float, float, float]
Dims = Tuple[int, int, int]


class Plane(NamedTuple):
    """Oriented plane; points inside the cell satisfy normal . p > offset."""

    normal: np.ndarray
    offset: float

    def signed_distance(self, point: np.ndarray) -> float:
        return float(np.dot(self.normal, point) - self.offset)


class GridGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform", "frustum"]
    dims: Dims
    aabb_min: Optional[Vec3] = None
    aabb_max: Optional[Vec3] = None
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None
    f: Optional[float] = None

    @field_validator("dims")
    @classmethod
    def _check_dims(cls, v: Dims) -> Dims:
        if any(int(d) < 1 for d in v):
            raise ValueError(f"dims must be >= 1 in every axis, got {tuple(v)}")
        return v

    @model_validator(mode="after")
    def _check_params(self) -> "GridGeometry":
        if self.kind == "uniform":
            if self.aabb_min is None or self.aabb_max is None:
                raise ValueError("aabb_min/aabb_max are required for a uniform grid")
            extent = np.asarray(self.aabb_max) - np.asarray(self.aabb_min)
            if not np.all(extent > 0):
                raise ValueError(f"aabb must have positive extent per axis, got {tuple(extent)}")
        else:
            for name in ("alpha1", "alpha2", "f"):
                value = getattr(self, name)
                if value is None or not value > 0:
                    raise ValueError(f"{name} must be > 0 for a frustum grid, got {value}")
        return self

    # --- indexing ---
    @property
    def num_cells(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def linear_index(self, ix, iy, iz):
        nx, ny, _ = self.dims
        return (np.asarray(iz) * ny + np.asarray(iy)) * nx + np.asarray(ix)

    def unravel(self, index):
        nx, ny, _ = self.dims
        index = np.asarray(index)
        ix = index % nx
        iy = (index // nx) % ny
        iz = index // (nx * ny)
        return ix, iy, iz

    def check_index(self, index: int) -> None:
        if not 0 <= int(index) < self.num_cells:
            raise DataError(f"cell index {index} out of range [0, {self.num_cells})")

    # --- coordinate maps ---
    @property
    def cell_size(self) -> np.ndarray:
        """Cell extent per axis (uniform grids only)."""
        return (np.asarray(self.aabb_max) - np.asarray(self.aabb_min)) / np.asarray(self.dims)

    def layer_depth(self, z):
        """World depth of the frustum plane at grid coordinate z."""
        return self.alpha1 * np.exp(self.alpha2 * np.asarray(z, dtype=np.float64))

    def to_world(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        if self.kind == "uniform":
            return np.asarray(self.aabb_min) + coords * self.cell_size
        nx, ny, _ = self.dims
        depth = self.layer_depth(coords[..., 2])
        return np.stack([
            depth * self.f * (coords[..., 0] - nx / 2.0),
            depth * self.f * (coords[..., 1] - ny / 2.0),
            depth,
        ], axis=-1)

    def to_grid(self, points: np.ndarray) -> np.ndarray:
        """Continuous grid coordinates of world points (nan where undefined)."""
        points = np.asarray(points, dtype=np.float64)
        if self.kind == "uniform":
            return (points - np.asarray(self.aabb_min)) / self.cell_size
        nx, ny, _ = self.dims
        depth = points[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            safe = np.where(depth > 0, depth, np.nan)
            gx = points[..., 0] / (safe * self.f) + nx / 2.0
            gy = points[..., 1] / (safe * self.f) + ny / 2.0
            gz = np.log(safe / self.alpha1) / self.alpha2
        return np.stack([gx, gy, gz], axis=-1)

    def cell_of_points(self, points: np.ndarray) -> np.ndarray:
        """Linear cell index containing each point, -1 outside the grid."""
        g = self.to_grid(points)
        dims = np.asarray(self.dims)
        inside = np.all((g >= 0) & (g < dims), axis=-1)
        cells = np.floor(np.where(inside[..., None], g, 0)).astype(np.int64)
        index = self.linear_index(cells[..., 0], cells[..., 1], cells[..., 2])
        return np.where(inside, index, -1)

    def cell_center(self, index) -> np.ndarray:
        ix, iy, iz = self.unravel(index)
        coords = np.stack([ix + 0.5, iy + 0.5, iz + 0.5], axis=-1).astype(np.float64)
        return self.to_world(coords)

    def cell_centers(self) -> np.ndarray:
        return self.cell_center(np.arange(self.num_cells))

    def cell_bounds_world(self, index: int) -> List[Plane]:
        """The six inward-oriented planes bounding a cell (x-lo, x-hi, y-lo, y-hi, z-lo, z-hi)."""
        self.check_index(index)
        ix, iy, iz = (int(v) for v in self.unravel(index))
        planes: List[Plane] = []
        if self.kind == "uniform":
            lo = np.asarray(self.aabb_min) + np.array([ix, iy, iz]) * self.cell_size
            hi = lo + self.cell_size
            for axis in range(3):
                n = np.zeros(3)
                n[axis] = 1.0
                planes.append(Plane(n, float(lo[axis])))
                planes.append(Plane(-n, float(-hi[axis])))
            return planes
        nx, ny, _ = self.dims
        for axis, (i, n_axis) in enumerate(((ix, nx), (iy, ny))):
            for side, g in ((1.0, i), (-1.0, i + 1)):
                slope = self.f * (g - n_axis / 2.0)
                n = np.zeros(3)
                n[axis] = 1.0
                n[2] = -slope
                n = side * n / np.linalg.norm(n)
                planes.append(Plane(n, 0.0))
        z0 = float(self.layer_depth(iz))
        z1 = float(self.layer_depth(iz + 1))
        planes.append(Plane(np.array([0.0, 0.0, 1.0]), z0))
        planes.append(Plane(np.array([0.0, 0.0, -1.0]), -z1))
        return planes

    def cell_volume(self, index) -> np.ndarray:
        if self.kind == "uniform":
            return np.full(np.shape(index), float(np.prod(self.cell_size)))
        _, _, iz = self.unravel(index)
        z0 = self.layer_depth(iz)
        z1 = self.layer_depth(np.asarray(iz) + 1)
        return self.f ** 2 * (z1 ** 3 - z0 ** 3) / 3.0

    def world_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """World-space AABB enclosing the grid hull."""
        if self.kind == "uniform":
            return np.asarray(self.aabb_min, dtype=np.float64), np.asarray(self.aabb_max, dtype=np.float64)
        nx, ny, nz = self.dims
        corners = np.array([[x, y, z] for x in (0, nx) for y in (0, ny) for z in (0, nz)], dtype=np.float64)
        world = self.to_world(corners)
        return world.min(axis=0), world.max(axis=0)

    def header_params(self) -> List[str]:
        if self.kind == "uniform":
            return [repr(float(v)) for v in (*self.aabb_min, *self.aabb_max)]
        return [repr(float(v)) for v in (self.alpha1, self.alpha2, self.f)]


def make_uniform_geometry(dims, aabb: Tuple[Vec3, Vec3]) -> GridGeometry:
    dims = _as_dims(dims)
    return GridGeometry(kind="uniform", dims=dims, aabb_min=tuple(aabb[0]), aabb_max=tuple(aabb[1]))


def make_frustum_geometry(dims, z_min: float, z_max: float, hfov: float) -> GridGeometry:
    """Frustum grid whose near/far planes sit at z_min/z_max and whose x extent spans hfov degrees."""
    dims = _as_dims(dims)
    if not 0 < z_min < z_max:
        raise DataError(f"z_min/z_max must satisfy 0 < z_min < z_max, got {z_min}, {z_max}")
    if not 0 < hfov < 180:
        raise DataError(f"hfov must be in (0, 180) degrees, got {hfov}")
    nx, _, nz = dims
    return GridGeometry(
        kind="frustum",
        dims=dims,
        alpha1=float(z_min),
        alpha2=math.log(z_max / z_min) / nz,
        f=math.tan(math.radians(hfov) / 2.0) / (nx / 2.0),
    )


def _as_dims(dims) -> Dims:
    if isinstance(dims, (int, np.integer)):
        return (int(dims),) * 3
    return tuple(int(d) for d in dims)


@dataclass(frozen=True)
class OccupancyGrid:
    """Per-cell emptiness probabilities x in [0,1]."""

    geometry: GridGeometry
    x: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64).reshape(-1)
        if x.size != self.geometry.num_cells:
            raise DataError(f"x has {x.size} values, geometry has {self.geometry.num_cells} cells")
        if not np.all((x >= 0.0) & (x <= 1.0)):
            raise DomainError("x values must lie in [0,1]")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def occupancy(self) -> np.ndarray:
        return 1.0 - self.x

    def volume(self) -> np.ndarray:
        nx, ny, nz = self.geometry.dims
        return self.x.reshape(nz, ny, nx)

    def replace(self, x: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(self.geometry, x)


@dataclass(frozen=True)
class AuxGrid:
    """Per-cell auxiliary payload: RGB color in [0,1]^3 or a K-class simplex."""

    geometry: GridGeometry
    kind: Literal["color", "semantics"]
    payload: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.payload, dtype=np.float64)
        n = self.geometry.num_cells
        if p.ndim != 2 or p.shape[0] != n:
            raise DataError(f"payload must have shape ({n}, C), got {p.shape}")
        if self.kind == "color":
            if p.shape[1] != 3:
                raise DataError(f"color payload needs 3 channels, got {p.shape[1]}")
            if not np.all((p >= 0.0) & (p <= 1.0)):
                raise DomainError("color payload values must lie in [0,1]")
        elif self.kind == "semantics":
            check_simplex(p)
        else:
            raise DataError(f"unknown aux kind {self.kind!r}")
        p.setflags(write=False)
        object.__setattr__(self, "payload", p)

    @property
    def channels(self) -> int:
        return int(self.payload.shape[1])

    def replace(self, payload: np.ndarray) -> "AuxGrid":
        return AuxGrid(self.geometry, self.kind, payload)


@dataclass(frozen=True)
class BinaryGrid:
    """Ground-truth occupancy, True = occupied."""

    geometry: GridGeometry
    occ: np.ndarray = field(repr=False)

    def __post_init__(self):
        occ = np.array(self.occ, dtype=bool).reshape(-1)
        if occ.size != self.geometry.num_cells:
            raise DataError(f"occ has {occ.size} values, geometry has {self.geometry.num_cells} cells")
        occ.setflags(write=False)
        object.__setattr__(self, "occ", occ)

    def as_occupancy_grid(self) -> OccupancyGrid:
        return OccupancyGrid(self.geometry, np.where(self.occ, 0.0, 1.0))


def check_simplex(p: np.ndarray, atol: float = 1e-9) -> None:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or not np.allclose(p.sum(axis=-1), 1.0, rtol=0.0, atol=atol):
        raise DomainError("semantic payload rows must be nonnegative and sum to 1")


def require_same_geometry(a: GridGeometry, b: GridGeometry) -> None:
    if a != b:
        raise GeometryMismatchError(f"geometry mismatch: {a.kind}{a.dims} vs {b.kind}{b.dims}")


def make_uniform_grid(dims, aabb: Tuple[Vec3, Vec3], fill_x: float) -> OccupancyGrid:
    if not 0.0 <= fill_x <= 1.0:
        raise DomainError(f"fill_x must lie in [0,1], got {fill_x}")
    geometry = make_uniform_geometry(dims, aabb)
    return OccupancyGrid(geometry, np.full(geometry.num_cells, float(fill_x)))


def unit_cube() -> Tuple[Vec3, Vec3]:
    """The default object-scale bounds, a 1 m cube centred at the origin."""
    return (-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)
