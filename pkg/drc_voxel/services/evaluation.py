"""Reconstruction metrics and an exhaustive loss oracle."""

from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np

from drc_voxel.services.grid import BinaryGrid, OccupancyGrid, require_same_geometry
from drc_voxel.utils.errors import DataError, DomainError
from drc_voxel.utils.settings import DEFAULTS

MAX_BRUTE_FORCE_CELLS = 20


@dataclass
class IoUResult:
    best_iou: float
    best_threshold: float
    curve: List[Tuple[float, float]] = field(default_factory=list)

    def tsv_lines(self) -> List[str]:
        lines = [f"# best_iou\t{self.best_iou:.6f}", f"# best_threshold\t{self.best_threshold:.2f}", "threshold\tiou"]
        lines += [f"{t:.2f}\t{iou:.6f}" for t, iou in self.curve]
        return lines


def _occupancy(pred: Union[OccupancyGrid, np.ndarray]) -> np.ndarray:
    return pred.occupancy if isinstance(pred, OccupancyGrid) else 1.0 - np.asarray(pred, dtype=np.float64)


def _iou(occupied: np.ndarray, gt: np.ndarray) -> float:
    union = np.count_nonzero(occupied | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(occupied & gt) / union


def iou_at(pred: OccupancyGrid, gt: BinaryGrid, threshold: float) -> float:
    """IoU after binarizing: a cell is occupied iff 1 - x >= threshold."""
    require_same_geometry(pred.geometry, gt.geometry)
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"threshold must lie in [0,1], got {threshold}")
    return _iou(_occupancy(pred) >= threshold, gt.occ)


def best_threshold(pred: OccupancyGrid, gt: BinaryGrid, step: float = DEFAULTS["threshold_step"]) -> IoUResult:
    """Sweep thresholds 0..1; ties go to the lower threshold."""
    require_same_geometry(pred.geometry, gt.geometry)
    occupancy = _occupancy(pred)
    count = int(round(1.0 / step))
    curve = []
    for i in range(count + 1):
        t = i / count
        curve.append((t, _iou(occupancy >= t, gt.occ)))
    best = max(range(len(curve)), key=lambda i: (curve[i][1], -i))
    return IoUResult(curve[best][1], curve[best][0], curve)


def brute_force_ray_loss(x_r, psi) -> float:
    """Expected cost by enumerating all 2^N empty/occupied configurations of the ray's cells."""
    x = np.asarray(x_r, dtype=np.float64).reshape(-1)
    psi = np.asarray(psi, dtype=np.float64).reshape(-1)
    n = x.size
    if n > MAX_BRUTE_FORCE_CELLS:
        raise DataError(f"brute force is limited to {MAX_BRUTE_FORCE_CELLS} cells, got {n}")
    if psi.size != n + 1:
        raise DataError(f"psi has {psi.size} entries, expected {n + 1}")
    if n == 0:
        return float(psi[0])
    # bit j set = cell j empty
    empty = ((np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    weight = np.prod(np.where(empty, x, 1.0 - x), axis=1)
    first = np.where(empty.all(axis=1), n, np.argmin(empty, axis=1))
    return float(np.dot(weight, psi[first]))
