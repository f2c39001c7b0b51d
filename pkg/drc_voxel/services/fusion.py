"""Depth fusion and silhouette carving baselines.

Fusion keeps an (empty, occupied) ray count per cell: cells a ray passes
through before its observed depth count as empty, the cell containing the
observed hit point counts as occupied. Background rays count their whole
trace as empty. A hit point at most one cell past the far side of the trace
is clamped into the last traversed cell; further out the ray counts as an
escape.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from drc_voxel.services.grid import BinaryGrid, GridGeometry, OccupancyGrid
from drc_voxel.services.observation import Observation
from drc_voxel.utils.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class FusionGrid:
    geometry: GridGeometry = field(repr=False)
    empty_count: np.ndarray = field(repr=False)
    occupied_count: np.ndarray = field(repr=False)

    @classmethod
    def zeros(cls, geometry: GridGeometry) -> "FusionGrid":
        n = geometry.num_cells
        return cls(geometry, np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64))

    @property
    def valid(self) -> np.ndarray:
        return (self.empty_count + self.occupied_count) > 0

    def soft_occupancy(self) -> np.ndarray:
        """occupied / (occupied + empty) on valid cells, 0 elsewhere."""
        total = self.empty_count + self.occupied_count
        return np.where(total > 0, self.occupied_count / np.maximum(total, 1), 0.0)

    def as_occupancy_grid(self) -> OccupancyGrid:
        """Emptiness-convention grid; never-observed cells are scored as empty."""
        return OccupancyGrid(self.geometry, 1.0 - self.soft_occupancy())


def accumulate_depth(fusion: FusionGrid, observation: Observation) -> None:
    table = observation.trace_table(fusion.geometry)
    depth = observation.depth.reshape(-1)
    fg = depth < observation.escape_depth
    lengths = table.lengths
    rows = np.repeat(np.arange(len(table)), lengths)
    t0, t1, cells = table.t_enter, table.t_exit, table.cells
    hit_t = depth[rows]
    escaping = ~fg[rows]
    # segments fully before the hit point
    empty = escaping | (t1 < hit_t)
    # the segment containing the hit point
    occupied = ~escaping & (t0 <= hit_t) & (hit_t < t1)
    # hits in front of the grid count nothing
    np.add.at(fusion.empty_count, cells[empty], 1)
    np.add.at(fusion.occupied_count, cells[occupied], 1)
    # noisy depths just past the far boundary: clamp into the last traversed cell
    ends = table.offsets[1:] - 1
    has_cells = lengths > 0
    overshoot = fg & has_cells
    last_exit = t1[ends[has_cells]]
    last_len = last_exit - t0[ends[has_cells]]
    d = depth[has_cells]
    overshoot[has_cells] &= (d >= last_exit) & (d < last_exit + last_len)
    if np.any(overshoot):
        last = cells[ends[overshoot]]
        # only hits strictly past the exit counted the last cell as empty above
        counted_empty = t1[ends[overshoot]] < depth[overshoot]
        np.add.at(fusion.empty_count, last[counted_empty], -1)
        np.add.at(fusion.occupied_count, last, 1)


def fuse_depth(observations: Sequence[Observation], geometry: GridGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """Soft occupancy (occupied fraction) and validity mask from depth views."""
    fusion = fuse_depth_counts(observations, geometry)
    return fusion.soft_occupancy(), fusion.valid


def fuse_depth_counts(observations: Sequence[Observation], geometry: GridGeometry) -> FusionGrid:
    fusion = FusionGrid.zeros(geometry)
    for obs in observations:
        if obs.kind not in ("depth", "depth_semantics"):
            raise DataError(f"depth fusion needs depth observations, got {obs.kind}")
        accumulate_depth(fusion, obs)
    logger.info("[fuse] views=%d valid=%d/%d", len(observations), int(fusion.valid.sum()), geometry.num_cells)
    return fusion


def carve_masks(observations: Sequence[Observation], geometry: GridGeometry) -> BinaryGrid:
    """Visual hull: a cell stays occupied unless some background ray crosses it."""
    carved = np.zeros(geometry.num_cells, dtype=bool)
    for obs in observations:
        if obs.kind != "mask":
            raise DataError(f"carving needs mask observations, got {obs.kind}")
        table = obs.trace_table(geometry)
        background = obs.mask.reshape(-1) == 0
        rows = np.repeat(np.arange(len(table)), table.lengths)
        carved[table.cells[background[rows]]] = True
    return BinaryGrid(geometry, ~carved)
