"""Exact ordered ray/grid intersection.

``trace`` returns every cell a ray's positive half-line passes through, in
increasing t, with entry/exit parameters. The event-induced depth of a cell is
the midpoint of its interval. Uniform grids are stepped axis crossing by axis
crossing; frustum grids sort the crossings of their three plane families.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from drc_voxel.services.camera import Ray
from drc_voxel.services.grid import BinaryGrid, GridGeometry, require_same_geometry
from drc_voxel.utils.settings import TIE_EPS

logger = logging.getLogger(__name__)

_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0, dtype=np.float64)


@dataclass(frozen=True)
class RayTrace:
    geometry: GridGeometry = field(repr=False)
    cells: np.ndarray
    t_enter: np.ndarray
    t_exit: np.ndarray

    @property
    def n(self) -> int:
        return int(self.cells.size)

    @property
    def d(self) -> np.ndarray:
        """Event-induced depth per cell: midpoint of the traversed interval."""
        return 0.5 * (self.t_enter + self.t_exit)

    @property
    def length(self) -> float:
        return float(np.sum(self.t_exit - self.t_enter))


class FirstHit(NamedTuple):
    event: int
    cell: int
    depth: float

    @property
    def escaped(self) -> bool:
        return self.cell < 0


def trace(geometry: GridGeometry, ray: Ray) -> RayTrace:
    o = [float(c) for c in ray.origin]
    d = [float(c) for c in ray.direction]
    if geometry.kind == "uniform":
        cells, t0, t1 = _trace_uniform(geometry, o, d)
    else:
        cells, t0, t1 = _trace_frustum(geometry, np.asarray(o), np.asarray(d))
    if not cells:
        return RayTrace(geometry, _EMPTY_I, _EMPTY_F, _EMPTY_F)
    return RayTrace(
        geometry,
        np.asarray(cells, dtype=np.int64),
        np.asarray(t0, dtype=np.float64),
        np.asarray(t1, dtype=np.float64),
    )


def _slab(lo, hi, o, d):
    t_min, t_max = 0.0, math.inf
    for axis in range(3):
        if d[axis] == 0.0:
            if o[axis] < lo[axis] or o[axis] > hi[axis]:
                return None
            continue
        a = (lo[axis] - o[axis]) / d[axis]
        b = (hi[axis] - o[axis]) / d[axis]
        if a > b:
            a, b = b, a
        t_min = max(t_min, a)
        t_max = min(t_max, b)
    if t_min >= t_max:
        return None
    return t_min, t_max


def _trace_uniform(geometry: GridGeometry, o, d):
    lo = [float(v) for v in geometry.aabb_min]
    hi = [float(v) for v in geometry.aabb_max]
    dims = geometry.dims
    size = [(hi[a] - lo[a]) / dims[a] for a in range(3)]
    span = _slab(lo, hi, o, d)
    if span is None:
        return [], [], []
    t_cur, t_far = span

    t_sample = t_cur + TIE_EPS
    idx = []
    step = []
    for a in range(3):
        i = int(math.floor((o[a] + d[a] * t_sample - lo[a]) / size[a]))
        idx.append(min(max(i, 0), dims[a] - 1))
        step.append(1 if d[a] > 0 else (-1 if d[a] < 0 else 0))

    def next_crossing(a):
        if step[a] == 0:
            return math.inf
        boundary = lo[a] + (idx[a] + (1 if step[a] > 0 else 0)) * size[a]
        return (boundary - o[a]) / d[a]

    t_next = [next_crossing(a) for a in range(3)]
    cells, t_in, t_out = [], [], []
    cap = dims[0] + dims[1] + dims[2] + 3
    nx, ny = dims[0], dims[1]
    while True:
        axis = min(range(3), key=lambda a: t_next[a])
        t_exit = min(t_next[axis], t_far)
        if t_exit > t_cur:
            cells.append((idx[2] * ny + idx[1]) * nx + idx[0])
            t_in.append(t_cur)
            t_out.append(t_exit)
            assert len(cells) <= cap, "uniform trace exceeded its crossing cap"
            t_cur = t_exit
        if t_exit >= t_far:
            break
        idx[axis] += step[axis]
        if not 0 <= idx[axis] < dims[axis]:
            break
        t_next[axis] = next_crossing(axis)
    return cells, t_in, t_out


def _trace_frustum(geometry: GridGeometry, o: np.ndarray, d: np.ndarray):
    nx, ny, nz = geometry.dims
    f = geometry.f
    crossings = []
    if d[2] != 0.0:
        depths = geometry.layer_depth(np.arange(nz + 1))
        crossings.append((depths - o[2]) / d[2])
    for axis, n_axis in ((0, nx), (1, ny)):
        slopes = f * (np.arange(n_axis + 1) - n_axis / 2.0)
        denom = d[axis] - slopes * d[2]
        numer = -(o[axis] - slopes * o[2])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(denom != 0.0, numer / np.where(denom != 0.0, denom, 1.0), np.nan)
        crossings.append(t)
    ts = np.concatenate(crossings)
    ts = ts[np.isfinite(ts) & (ts > 0.0)]
    cap = ts.size + 1
    ts = np.unique(np.concatenate([[0.0], ts]))
    if ts.size < 2:
        return [], [], []
    ta, tb = ts[:-1], ts[1:]
    keep = (tb - ta) > TIE_EPS
    ta, tb = ta[keep], tb[keep]
    mids = o + np.outer(0.5 * (ta + tb), d)
    owners = geometry.cell_of_points(mids)
    inside = owners >= 0
    cells, t_in, t_out = [], [], []
    for cell, a, b in zip(owners[inside], ta[inside], tb[inside]):
        if cells and cells[-1] == cell and abs(t_out[-1] - a) <= TIE_EPS:
            t_out[-1] = float(b)
            continue
        cells.append(int(cell))
        t_in.append(float(a))
        t_out.append(float(b))
    assert len(cells) <= cap, "frustum trace exceeded its plane-crossing cap"
    return cells, t_in, t_out


def first_hits(occ: np.ndarray, cells: np.ndarray, depths: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First occupied cell of each padded row: (event, cell, depth).

    Rows that escape get event = row length, cell -1 and depth inf.
    """
    valid = cells >= 0
    occupied = valid & occ[np.where(valid, cells, 0)]
    hit = occupied.any(axis=1)
    first = np.argmax(occupied, axis=1)
    rows = np.arange(cells.shape[0])
    event = np.where(hit, first, valid.sum(axis=1))
    cell = np.where(hit, cells[rows, first], -1)
    depth = np.where(hit, depths[rows, first], math.inf)
    return event, cell, depth


def first_hit(binary: BinaryGrid, ray_trace: RayTrace) -> FirstHit:
    """First occupied cell along the trace, or escape (cell -1, depth inf)."""
    require_same_geometry(binary.geometry, ray_trace.geometry)
    if not ray_trace.n:
        return FirstHit(0, -1, math.inf)
    event, cell, depth = first_hits(binary.occ, ray_trace.cells[None, :], ray_trace.d[None, :])
    return FirstHit(int(event[0]), int(cell[0]), float(depth[0]))


class TraceTable:
    """Traces of many rays in compressed row storage.

    Row r spans ``cells[offsets[r]:offsets[r+1]]``; ``gather`` turns a subset
    of rows into padded (B, L) arrays with cell -1 in the padding.
    """

    def __init__(self, geometry: GridGeometry, offsets, cells, t_enter, t_exit):
        self.geometry = geometry
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.t_enter = np.asarray(t_enter, dtype=np.float64)
        self.t_exit = np.asarray(t_exit, dtype=np.float64)

    def __len__(self) -> int:
        return int(self.offsets.size - 1)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def row(self, r: int) -> RayTrace:
        s, e = self.offsets[r], self.offsets[r + 1]
        return RayTrace(self.geometry, self.cells[s:e], self.t_enter[s:e], self.t_exit[s:e])

    def gather(self, rows: Sequence[int]):
        """Padded (cells, depths, lengths) for the given rows."""
        rows = np.asarray(rows, dtype=np.int64)
        lengths = self.lengths[rows]
        width = max(int(lengths.max(initial=0)), 1)
        cols = np.arange(width)
        valid = cols[None, :] < lengths[:, None]
        flat = self.offsets[rows][:, None] + cols[None, :]
        flat = np.where(valid, flat, 0)
        if self.cells.size == 0:
            cells = np.full(valid.shape, -1, dtype=np.int64)
            depths = np.zeros(valid.shape)
        else:
            cells = np.where(valid, self.cells[flat], -1)
            depths = np.where(valid, 0.5 * (self.t_enter[flat] + self.t_exit[flat]), 0.0)
        return cells, depths, lengths


def trace_many(geometry: GridGeometry, origins: np.ndarray, directions: np.ndarray, progress: Optional[object] = None) -> TraceTable:
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    offsets = [0]
    cells, t0, t1 = [], [], []
    iterator = range(origins.shape[0]) if progress is None else progress(range(origins.shape[0]))
    for r in iterator:
        tr = trace(geometry, Ray(origins[r], directions[r]))
        cells.append(tr.cells)
        t0.append(tr.t_enter)
        t1.append(tr.t_exit)
        offsets.append(offsets[-1] + tr.n)
    logger.debug("[trace] rays=%d cells=%d", origins.shape[0], offsets[-1])
    if not cells:
        return TraceTable(geometry, offsets, _EMPTY_I, _EMPTY_F, _EMPTY_F)
    return TraceTable(geometry, offsets, np.concatenate(cells), np.concatenate(t0), np.concatenate(t1))
