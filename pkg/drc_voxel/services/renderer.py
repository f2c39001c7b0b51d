"""Synthetic observations of binary and probabilistic grids."""

import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from drc_voxel.services.camera import Camera, intrinsics_from_hfov, look_at
from drc_voxel.services.consistency import WHITE, batch_event_probabilities
from drc_voxel.services.grid import AuxGrid, BinaryGrid, OccupancyGrid, require_same_geometry
from drc_voxel.services.observation import KINDS, Observation
from drc_voxel.services.traversal import TraceTable, first_hits
from drc_voxel.utils.errors import DataError
from drc_voxel.utils.parallel import chunk_slices
from drc_voxel.utils.settings import DEFAULTS, ESCAPE_DEPTH_OBJECT

logger = logging.getLogger(__name__)

_CHUNK = 8192


def _check_aux(kind: str, aux: Optional[AuxGrid], geometry) -> None:
    if kind not in KINDS:
        raise DataError(f"unknown observation kind {kind!r}")
    if kind in ("depth_semantics", "color"):
        expected = "semantics" if kind == "depth_semantics" else "color"
        if aux is None or aux.kind != expected:
            raise DataError(f"rendering {kind} needs a {expected} aux grid")
        require_same_geometry(geometry, aux.geometry)


def _empty_observation(kind: str, camera: Camera, num_classes: int, escape_depth: float) -> Observation:
    # builds the trace table through Observation so the fitter can reuse it
    shape = (camera.height, camera.width)
    return Observation(
        kind,
        camera,
        mask=np.zeros(shape, dtype=np.uint8) if kind == "mask" else None,
        depth=np.full(shape, escape_depth) if kind in ("depth", "depth_semantics") else None,
        labels=np.full(shape, num_classes - 1, dtype=np.int64) if kind == "depth_semantics" else None,
        color=np.ones(shape + (3,)) if kind == "color" else None,
        num_classes=num_classes,
        escape_depth=escape_depth,
    )


def render(
    binary: BinaryGrid,
    aux: Optional[AuxGrid],
    camera: Camera,
    kind: str,
    *,
    escape_depth: float = ESCAPE_DEPTH_OBJECT,
) -> Observation:
    """First-hit rendering of a binary grid; escapes follow the loss's escape conventions."""
    _check_aux(kind, aux, binary.geometry)
    num_classes = aux.channels if kind == "depth_semantics" else 0
    blank = _empty_observation(kind, camera, num_classes, escape_depth)
    table = blank.trace_table(binary.geometry)

    n = camera.num_pixels
    hit_cell = np.full(n, -1, dtype=np.int64)
    hit_depth = np.full(n, escape_depth)
    for sl in chunk_slices(n, _CHUNK):
        rows = np.arange(sl.start, sl.stop)
        cells, depths, _ = table.gather(rows)
        _, cell, depth = first_hits(binary.occ, cells, depths)
        hit_cell[rows] = cell
        hit_depth[rows] = np.where(cell >= 0, depth, escape_depth)

    shape = (camera.height, camera.width)
    hit = hit_cell >= 0
    fields = {}
    if kind == "mask":
        fields["mask"] = hit.astype(np.uint8).reshape(shape)
    if kind in ("depth", "depth_semantics"):
        fields["depth"] = hit_depth.reshape(shape)
    if kind == "depth_semantics":
        labels = np.full(n, num_classes - 1, dtype=np.int64)
        labels[hit] = np.argmax(aux.payload[hit_cell[hit]], axis=-1)
        fields["labels"] = labels.reshape(shape)
    if kind == "color":
        color = np.ones((n, 3))
        color[hit] = aux.payload[hit_cell[hit]]
        fields["color"] = color.reshape(shape + (3,))
    observation = Observation(kind, camera, num_classes=num_classes, escape_depth=escape_depth, **fields)
    observation._traces[binary.geometry] = table
    logger.debug("[render] kind=%s pixels=%d hits=%d", kind, n, int(hit.sum()))
    return observation


class ExpectedRender(NamedTuple):
    """Expectations over the ray-termination distribution, per pixel."""

    foreground: np.ndarray
    depth: np.ndarray
    color: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None


def expected_fields(
    grid: OccupancyGrid,
    aux: Optional[AuxGrid],
    camera: Camera,
    *,
    escape_depth: float = ESCAPE_DEPTH_OBJECT,
    table: Optional[TraceTable] = None,
) -> ExpectedRender:
    """Per-pixel expectations over the ray-termination distribution of a probabilistic grid."""
    if aux is not None:
        require_same_geometry(grid.geometry, aux.geometry)
    if table is None:
        table = _empty_observation("mask", camera, 0, escape_depth).trace_table(grid.geometry)
    n = camera.num_pixels
    fg = np.zeros(n)
    depth = np.zeros(n)
    color = np.zeros((n, 3)) if aux is not None and aux.kind == "color" else None
    dist = np.zeros((n, aux.channels)) if aux is not None and aux.kind == "semantics" else None
    for sl in chunk_slices(n, _CHUNK):
        rows = np.arange(sl.start, sl.stop)
        cells, depths, _ = table.gather(rows)
        valid = cells >= 0
        safe = np.where(valid, cells, 0)
        probs = batch_event_probabilities(np.where(valid, grid.x[safe], 1.0))
        cell_probs, escape = probs[:, :-1], probs[:, -1]
        fg[rows] = 1.0 - escape
        depth[rows] = np.sum(cell_probs * depths, axis=1) + escape * escape_depth
        if color is not None:
            color[rows] = np.einsum("bl,blc->bc", cell_probs, aux.payload[safe]) + escape[:, None] * WHITE
        if dist is not None:
            k = aux.channels
            dist[rows] = np.einsum("bl,blc->bc", cell_probs, aux.payload[safe]) + escape[:, None] / k
    shape = (camera.height, camera.width)
    return ExpectedRender(
        foreground=fg.reshape(shape),
        depth=depth.reshape(shape),
        color=None if color is None else color.reshape(shape + (3,)),
        labels=None if dist is None else np.argmax(dist, axis=-1).reshape(shape),
    )


def render_expected(
    grid: OccupancyGrid,
    aux: Optional[AuxGrid],
    camera: Camera,
    kind: str,
    *,
    escape_depth: float = ESCAPE_DEPTH_OBJECT,
) -> Observation:
    """Preview of a fitted grid as an observation of ``kind``.

    Depth and color are expectations over the ray-termination distribution.
    A pixel is foreground when the ray stops inside the grid with probability
    at least 0.5; background class-id pixels get the background class.
    """
    _check_aux(kind, aux, grid.geometry)
    num_classes = aux.channels if kind == "depth_semantics" else 0
    table = _empty_observation(kind, camera, num_classes, escape_depth).trace_table(grid.geometry)
    soft = expected_fields(grid, aux, camera, escape_depth=escape_depth, table=table)
    fg = soft.foreground >= 0.5
    fields = {}
    if kind == "mask":
        fields["mask"] = fg.astype(np.uint8)
    if kind in ("depth", "depth_semantics"):
        fields["depth"] = soft.depth
    if kind == "depth_semantics":
        fields["labels"] = np.where(fg, soft.labels, num_classes - 1)
    if kind == "color":
        fields["color"] = soft.color
    observation = Observation(kind, camera, num_classes=num_classes, escape_depth=escape_depth, **fields)
    observation._traces[grid.geometry] = table
    logger.debug("[render] expected kind=%s pixels=%d foreground=%d", kind, camera.num_pixels, int(fg.sum()))
    return observation


def add_depth_noise(observation: Observation, max_noise: float, seed: int, *, stream: int = 0) -> Observation:
    """Uniform, independent per-pixel noise on foreground depths.

    Noise values are drawn as one counter-based (Philox) stream in pixel-id
    order, keyed by (seed, stream), so pixel (u, v) always gets the same
    sample for a given key. Pass the view index as ``stream``.
    """
    if observation.kind not in ("depth", "depth_semantics"):
        raise DataError(f"depth noise needs a depth observation, got {observation.kind}")
    if max_noise < 0:
        raise DataError(f"max_noise must be >= 0, got {max_noise}")
    if max_noise == 0:
        return observation
    rng = np.random.Generator(np.random.Philox(key=np.array([int(stream), int(seed)], dtype=np.uint64)))
    noise = rng.uniform(-max_noise, max_noise, size=observation.depth.shape)
    fg = observation.depth < observation.escape_depth
    depth = np.where(fg, np.maximum(observation.depth + noise, 1e-6), observation.depth)
    noisy = Observation(
        observation.kind,
        observation.camera,
        depth=depth,
        labels=observation.labels,
        num_classes=observation.num_classes,
        escape_depth=observation.escape_depth,
    )
    noisy._traces.update(observation._traces)
    return noisy


def sample_view_ring(
    n_views: int,
    elevation_range: Tuple[float, float] = (DEFAULTS["elevation_min"], DEFAULTS["elevation_max"]),
    radius: float = DEFAULTS["camera_radius"],
    seed: int = 0,
    *,
    azimuths: Optional[Sequence[float]] = None,
    image_size: int = DEFAULTS["image_size"],
    hfov: float = DEFAULTS["camera_hfov"],
    target=(0.0, 0.0, 0.0),
) -> List[Camera]:
    """Perspective cameras on a sphere around ``target``, looking at it.

    Azimuth 0 / elevation 0 sits on the +z axis; elevation raises the camera
    towards +y (world up).
    """
    if n_views < 1:
        raise DataError(f"n_views must be >= 1, got {n_views}")
    rng = np.random.default_rng(seed)
    az = rng.uniform(0.0, 360.0, size=n_views)
    el = rng.uniform(elevation_range[0], elevation_range[1], size=n_views)
    if azimuths is not None:
        az = np.asarray(azimuths, dtype=np.float64).reshape(-1)
        if az.size != n_views:
            raise DataError(f"got {az.size} azimuths for {n_views} views")
    intrinsics = intrinsics_from_hfov(image_size, image_size, hfov)
    target = np.asarray(target, dtype=np.float64)
    cameras = []
    for a, e in zip(az, el):
        a, e = math.radians(a), math.radians(e)
        eye = target + radius * np.array([math.cos(e) * math.sin(a), math.sin(e), math.cos(e) * math.cos(a)])
        cameras.append(look_at(eye, target, width=image_size, height=image_size, intrinsics=intrinsics))
    return cameras
