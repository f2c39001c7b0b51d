"""Shape -> render -> fit / fuse -> evaluate pipelines behind ``repro`` and ``sweep``."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from drc_voxel.services.camera import Camera
from drc_voxel.services.evaluation import IoUResult, best_threshold
from drc_voxel.services.fitter import FitConfig, FitReport, fit
from drc_voxel.services.fusion import fuse_depth_counts
from drc_voxel.services.grid import AuxGrid, BinaryGrid, OccupancyGrid
from drc_voxel.services.observation import Observation
from drc_voxel.services.renderer import add_depth_noise, render, sample_view_ring
from drc_voxel.services.shapes import make_test_shape
from drc_voxel.utils.errors import DataError

logger = logging.getLogger(__name__)

# columns of the reconstruction table, in order
REPRO_SETTINGS = ("mask", "depth", "fusion", "noisy_depth", "noisy_fusion")
NOISE_SWEEP = (0.0, 0.05, 0.1, 0.2, 0.3)
VIEW_SWEEP = (1, 2, 3, 5, 8)


@dataclass
class Reconstruction:
    setting: str
    iou: IoUResult
    grid: OccupancyGrid
    aux: Optional[AuxGrid] = None
    report: Optional[FitReport] = None


def render_views(
    binary: BinaryGrid,
    aux: Optional[AuxGrid],
    cameras: Sequence[Camera],
    kind: str,
    *,
    noise: float = 0.0,
    seed: int = 0,
) -> List[Observation]:
    observations = []
    for i, camera in enumerate(cameras):
        obs = render(binary, aux, camera, kind)
        if noise > 0:
            obs = add_depth_noise(obs, noise, seed, stream=i)
        observations.append(obs)
    return observations


def fitted(setting: str, observations, gt: BinaryGrid, kind: str, config: FitConfig) -> Reconstruction:
    grid, aux, report = fit(observations, gt.geometry, kind, config)
    result = best_threshold(grid, gt)
    logger.info("[experiments] setting=%s best_iou=%.4f threshold=%.2f", setting, result.best_iou, result.best_threshold)
    return Reconstruction(setting, result, grid, aux, report)


def fused(setting: str, observations, gt: BinaryGrid) -> Reconstruction:
    grid = fuse_depth_counts(observations, gt.geometry).as_occupancy_grid()
    result = best_threshold(grid, gt)
    logger.info("[experiments] setting=%s best_iou=%.4f threshold=%.2f", setting, result.best_iou, result.best_threshold)
    return Reconstruction(setting, result, grid)


def shape_views(shape: str, dims: int, n_views: int, seed: int, **ring) -> tuple:
    binary, aux = make_test_shape(shape, dims)
    cameras = sample_view_ring(n_views, seed=seed, **ring)
    return binary, aux, cameras


def repro_shape(
    shape: str,
    dims: int,
    n_views: int,
    noise: float,
    config: FitConfig,
    seed: int = 0,
) -> Dict[str, Reconstruction]:
    """The five reconstruction settings for one test shape."""
    binary, aux, cameras = shape_views(shape, dims, n_views, seed)
    masks = render_views(binary, aux, cameras, "mask")
    depths = render_views(binary, aux, cameras, "depth")
    noisy = render_views(binary, aux, cameras, "depth", noise=noise, seed=seed)
    return {
        "mask": fitted("mask", masks, binary, "mask", config),
        "depth": fitted("depth", depths, binary, "depth", config),
        "fusion": fused("fusion", depths, binary),
        "noisy_depth": fitted("noisy_depth", noisy, binary, "depth", config),
        "noisy_fusion": fused("noisy_fusion", noisy, binary),
    }


def noise_sweep(
    shape: str,
    dims: int,
    n_views: int,
    values: Sequence[float],
    config: FitConfig,
    seed: int = 0,
) -> List[Dict[str, float]]:
    """Best IoU of depth fitting and of fusion at each noise amplitude."""
    if any(v < 0 for v in values):
        raise DataError("noise amplitudes must be >= 0")
    binary, aux, cameras = shape_views(shape, dims, n_views, seed)
    clean = render_views(binary, aux, cameras, "depth")
    rows = []
    for value in values:
        views = [add_depth_noise(obs, value, seed, stream=i) for i, obs in enumerate(clean)]
        drc = fitted(f"noise={value}", views, binary, "depth", config)
        fusion = fused(f"noise={value}", views, binary)
        rows.append({"value": float(value), "drc_iou": drc.iou.best_iou, "fusion_iou": fusion.iou.best_iou})
    return rows


def view_sweep(
    shape: str,
    dims: int,
    values: Sequence[int],
    config: FitConfig,
    seed: int = 0,
    kind: str = "depth",
) -> List[Dict[str, float]]:
    """Best IoU of fitting with the first k views of one fixed camera ring."""
    if any(int(v) < 1 for v in values):
        raise DataError("view counts must be >= 1")
    binary, aux, cameras = shape_views(shape, dims, int(max(values)), seed)
    observations = render_views(binary, aux, cameras, kind)
    rows = []
    for value in values:
        result = fitted(f"views={value}", observations[: int(value)], binary, kind, config)
        rows.append({"value": int(value), "drc_iou": result.iou.best_iou})
    return rows


def surface_color_error(binary: BinaryGrid, gt_aux: AuxGrid, aux: AuxGrid) -> float:
    """Mean absolute RGB error over occupied cells with at least one empty 6-neighbour."""
    nx, ny, nz = binary.geometry.dims
    occ = binary.occ.reshape(nz, ny, nx)
    padded = np.pad(occ, 1, constant_values=False)
    interior = np.ones_like(occ)
    for axis in range(3):
        for shift in (-1, 1):
            interior &= np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
    surface = (occ & ~interior).reshape(-1)
    if not surface.any():
        raise DataError("shape has no surface cells")
    return float(np.mean(np.abs(aux.payload[surface] - gt_aux.payload[surface])))
