"""Ray consistency: event probabilities, event costs, losses and gradients.

A ray crossing N cells with emptiness probabilities x_1..x_N terminates in
cell i with probability (1 - x_i) * prod_{j<i} x_j, or escapes (event N+1)
with probability prod_j x_j. Its loss is the expected event cost, evaluated
in the telescoped form

    L = psi(1) + sum_i (psi(i+1) - psi(i)) * prod_{j<=i} x_j

whose gradient is accumulated back to front in O(N) without dividing by x.

The batch functions work on padded (B, L) arrays. Padding uses x = 1 and the
escape cost, which leaves every loss and gradient unchanged.
"""

import logging
from concurrent.futures import as_completed
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from drc_voxel.services.grid import AuxGrid, OccupancyGrid, check_simplex, require_same_geometry
from drc_voxel.services.observation import Observation
from drc_voxel.utils.errors import DataError, DomainError
from drc_voxel.utils.parallel import chunk_slices, get_executor
from drc_voxel.utils.settings import ESCAPE_DEPTH_OBJECT, ESCAPE_DEPTH_SCENE, PROB_FLOOR

logger = logging.getLogger(__name__)

WHITE = np.ones(3)


class RaySamples(NamedTuple):
    """Per-cell values gathered along one trace."""

    x_r: np.ndarray
    p_r: Optional[np.ndarray] = None


class EventCosts(NamedTuple):
    """psi has N_r + 1 entries, the last one is the escape event."""

    psi: np.ndarray
    dpsi_dp: Optional[np.ndarray] = None


class RayObservation(NamedTuple):
    kind: str
    s_r: Optional[int] = None
    d_r: Optional[float] = None
    c_r: Optional[object] = None
    weight: float = 1.0


def gather_samples(grid: OccupancyGrid, aux: Optional[AuxGrid], ray_trace) -> RaySamples:
    x_r = grid.x[ray_trace.cells]
    p_r = aux.payload[ray_trace.cells] if aux is not None else None
    return RaySamples(x_r, p_r)


def _check_x(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise DomainError("emptiness probabilities must lie in [0,1]")
    return x


def _depths(ray_trace) -> np.ndarray:
    return np.asarray(getattr(ray_trace, "d", ray_trace), dtype=np.float64)


# --- single-ray API ---

def event_probabilities(x_r) -> np.ndarray:
    x = _check_x(np.atleast_1d(x_r))
    return batch_event_probabilities(x[None, :])[0]


def cost_depth(ray_trace, d_r: float, escape_depth: float = ESCAPE_DEPTH_OBJECT) -> EventCosts:
    d = _depths(ray_trace)
    return EventCosts(np.abs(np.append(d, escape_depth) - d_r))


def cost_mask(ray_trace, s_r: int) -> EventCosts:
    n = _depths(ray_trace).size
    if s_r not in (0, 1):
        raise DomainError(f"s_r must be 0 or 1, got {s_r}")
    psi = np.full(n + 1, float(s_r))
    psi[n] = 1.0 - s_r
    return EventCosts(psi)


def cost_semantic(
    ray_trace,
    p_r,
    d_r: float,
    c_r: int,
    escape_depth: float = ESCAPE_DEPTH_SCENE,
    semantic_weight: float = 1.0,
    num_classes: Optional[int] = None,
) -> EventCosts:
    d = _depths(ray_trace)
    p = np.asarray(p_r, dtype=np.float64)
    if d.size == 0:
        if not num_classes:
            raise DataError("num_classes is required when the trace is empty")
        p = np.zeros((0, num_classes))
    p = p.reshape(d.size, -1)
    check_simplex(p)
    psi, dpsi = batch_cost_semantic(
        d[None, :], p[None, :, :], np.array([d_r]), np.array([c_r]), np.array([d.size]),
        escape_depth=escape_depth, semantic_weight=semantic_weight, num_classes=num_classes or p.shape[1],
    )
    return EventCosts(psi[0], dpsi[0])


def cost_color(ray_trace, p_r, c_r) -> EventCosts:
    n = _depths(ray_trace).size
    p = np.asarray(p_r, dtype=np.float64).reshape(n, 3)
    c = np.asarray(c_r, dtype=np.float64)
    psi = np.append(0.5 * np.sum((p - c) ** 2, axis=-1), 0.5 * np.sum((WHITE - c) ** 2))
    return EventCosts(psi, p - c)


def _check_lengths(x: np.ndarray, psi: np.ndarray) -> None:
    if psi.size != x.size + 1:
        raise DataError(f"psi has {psi.size} entries, expected N_r + 1 = {x.size + 1}")


def ray_loss(x_r, psi) -> float:
    x = _check_x(np.atleast_1d(x_r))
    psi = np.asarray(psi, dtype=np.float64)
    _check_lengths(x, psi)
    return float(batch_loss(x[None, :], psi[None, :])[0])


def ray_loss_expectation(x_r, psi) -> float:
    """Direct sum_i psi(i) p(z = i)."""
    x = _check_x(np.atleast_1d(x_r))
    psi = np.asarray(psi, dtype=np.float64)
    _check_lengths(x, psi)
    return float(np.dot(event_probabilities(x), psi))


def ray_loss_grad_x(x_r, psi) -> np.ndarray:
    x = _check_x(np.atleast_1d(x_r))
    psi = np.asarray(psi, dtype=np.float64)
    _check_lengths(x, psi)
    return batch_grad_x(x[None, :], psi[None, :])[0]


def ray_loss_grad_x_naive(x_r, psi) -> np.ndarray:
    """O(N^2) transcription of the gradient formula, used as a reference."""
    x = _check_x(np.atleast_1d(x_r))
    psi = np.asarray(psi, dtype=np.float64)
    _check_lengths(x, psi)
    n = x.size
    grad = np.zeros(n)
    for k in range(n):
        for i in range(k, n):
            prod = np.prod(np.delete(x[: i + 1], k))
            grad[k] += (psi[i + 1] - psi[i]) * prod
    return grad


def ray_loss_grad_p(x_r, psi, dpsi_dp) -> np.ndarray:
    if dpsi_dp is None:
        raise DataError("ray_loss_grad_p needs dpsi_dp; this cost kind has no aux payload")
    x = _check_x(np.atleast_1d(x_r))
    probs = event_probabilities(x)[: x.size]
    return probs[:, None] * np.asarray(dpsi_dp, dtype=np.float64).reshape(x.size, -1)


def mask_loss_closed_form(x_r, s_r: int) -> float:
    x = _check_x(np.atleast_1d(x_r))
    return float(abs(np.prod(x) - s_r))


# --- batched kernels on padded (B, L) arrays ---

def batch_event_probabilities(x: np.ndarray) -> np.ndarray:
    """(B, L) -> (B, L+1)."""
    b, width = x.shape
    prefix = np.ones((b, width + 1))
    if width:
        prefix[:, 1:] = np.cumprod(x, axis=1)
    probs = np.empty((b, width + 1))
    probs[:, :width] = (1.0 - x) * prefix[:, :width]
    probs[:, width] = prefix[:, width]
    return probs


def batch_loss(x: np.ndarray, psi: np.ndarray) -> np.ndarray:
    if x.shape[1] == 0:
        return psi[:, 0].copy()
    return psi[:, 0] + np.sum(np.diff(psi, axis=1) * np.cumprod(x, axis=1), axis=1)


def batch_grad_x(x: np.ndarray, psi: np.ndarray) -> np.ndarray:
    b, width = x.shape
    grad = np.zeros((b, width))
    if width == 0:
        return grad
    delta = np.diff(psi, axis=1)
    exclusive = np.ones((b, width))
    exclusive[:, 1:] = np.cumprod(x[:, :-1], axis=1)
    # suffix[k] = sum_{i>=k} delta_i prod_{k<j<=i} x_j
    suffix = delta[:, width - 1].copy()
    grad[:, width - 1] = exclusive[:, width - 1] * suffix
    for k in range(width - 2, -1, -1):
        suffix = delta[:, k] + x[:, k + 1] * suffix
        grad[:, k] = exclusive[:, k] * suffix
    return grad


def batch_grad_p(x: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
    probs = batch_event_probabilities(x)[:, : x.shape[1]]
    return probs[:, :, None] * dpsi


def _pad_escape(psi_cells: np.ndarray, escape: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Append the escape event and copy its cost into every padded position."""
    b, width = psi_cells.shape
    psi = np.empty((b, width + 1))
    psi[:, :width] = psi_cells
    cols = np.arange(width + 1)[None, :]
    return np.where(cols >= lengths[:, None], escape[:, None], psi)


def batch_cost_depth(depths, d_r, lengths, escape_depth=ESCAPE_DEPTH_OBJECT):
    psi = np.abs(depths - d_r[:, None])
    return _pad_escape(psi, np.abs(escape_depth - d_r), lengths)


def batch_cost_mask(depths, s_r, lengths):
    s = np.asarray(s_r, dtype=np.float64)
    psi = np.broadcast_to(s[:, None], depths.shape)
    return _pad_escape(psi, 1.0 - s, lengths)


def batch_cost_semantic(depths, payload, d_r, c_r, lengths, escape_depth=ESCAPE_DEPTH_SCENE,
                        semantic_weight=1.0, num_classes=None):
    b, width = depths.shape
    k = num_classes or payload.shape[-1]
    rows = np.arange(b)[:, None]
    cols = np.arange(width)[None, :]
    prob = payload[rows, cols, np.asarray(c_r, dtype=np.int64)[:, None]]
    clamped = np.maximum(prob, PROB_FLOOR)
    with np.errstate(divide="ignore"):
        disparity = np.abs(1.0 / np.where(depths > 0, depths, np.inf) - 1.0 / d_r[:, None])
    psi = disparity - semantic_weight * np.log(clamped)
    escape = np.abs(1.0 / escape_depth - 1.0 / d_r) + semantic_weight * np.log(k)
    dpsi = np.zeros((b, width, payload.shape[-1]))
    dpsi[rows, cols, np.asarray(c_r, dtype=np.int64)[:, None]] = np.where(
        prob >= PROB_FLOOR, -semantic_weight / clamped, 0.0
    )
    valid = cols < lengths[:, None]
    dpsi *= valid[:, :, None]
    return _pad_escape(psi, escape, lengths), dpsi


def batch_cost_color(payload, color, lengths):
    width = payload.shape[1]
    diff = payload - color[:, None, :]
    psi = 0.5 * np.sum(diff ** 2, axis=-1)
    escape = 0.5 * np.sum((WHITE - color) ** 2, axis=-1)
    valid = np.arange(width)[None, :] < lengths[:, None]
    return _pad_escape(psi, escape, lengths), diff * valid[:, :, None]


# --- view loss ---

@dataclass
class RayBatch:
    """Rays through pixels of one observation, with their observed values and weights."""

    kind: str
    pixels: np.ndarray
    weight: np.ndarray
    s_r: Optional[np.ndarray] = None
    d_r: Optional[np.ndarray] = None
    c_label: Optional[np.ndarray] = None
    c_color: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.pixels.size)

    def take(self, sl: slice) -> "RayBatch":
        pick = lambda a: None if a is None else a[sl]
        return RayBatch(self.kind, self.pixels[sl], self.weight[sl], pick(self.s_r), pick(self.d_r),
                        pick(self.c_label), pick(self.c_color))

    def ray_observation(self, i: int) -> RayObservation:
        if self.kind == "mask":
            return RayObservation("mask", s_r=int(self.s_r[i]), weight=float(self.weight[i]))
        if self.kind == "depth":
            return RayObservation("depth", d_r=float(self.d_r[i]), weight=float(self.weight[i]))
        if self.kind == "depth_semantics":
            return RayObservation("depth_semantics", d_r=float(self.d_r[i]), c_r=int(self.c_label[i]),
                                  weight=float(self.weight[i]))
        return RayObservation("color", c_r=self.c_color[i], weight=float(self.weight[i]))


def ray_batch(observation: Observation, pixels: np.ndarray, weight: np.ndarray) -> RayBatch:
    pixels = np.asarray(pixels, dtype=np.int64)
    batch = RayBatch(observation.kind, pixels, np.asarray(weight, dtype=np.float64))
    if observation.kind == "mask":
        batch.s_r = 1 - observation.mask.reshape(-1)[pixels].astype(np.int64)
    if observation.kind in ("depth", "depth_semantics"):
        batch.d_r = observation.depth.reshape(-1)[pixels]
    if observation.kind == "depth_semantics":
        batch.c_label = observation.labels.reshape(-1)[pixels]
    if observation.kind == "color":
        batch.c_color = observation.color.reshape(-1, 3)[pixels]
    return batch


def all_rays(observation: Observation, foreground_weight: float = 1.0) -> RayBatch:
    """Every pixel of the observation, in row-major order."""
    pixels = np.arange(observation.num_pixels)
    weight = np.where(observation.foreground(), foreground_weight, 1.0)
    return ray_batch(observation, pixels, weight)


class ViewLoss(NamedTuple):
    loss: float
    grad_x: np.ndarray
    grad_p: Optional[np.ndarray]
    num_rays: int


def _batch_terms(grid, aux, observation, batch, cells, depths, lengths, options):
    n_cells = grid.geometry.num_cells
    valid = cells >= 0
    safe = np.where(valid, cells, 0)
    x = np.where(valid, grid.x[safe], 1.0)
    dpsi = None
    if batch.kind == "mask":
        psi = batch_cost_mask(depths, batch.s_r, lengths)
    elif batch.kind == "depth":
        psi = batch_cost_depth(depths, batch.d_r, lengths, escape_depth=options["escape_depth"])
    elif batch.kind == "depth_semantics":
        payload = aux.payload[safe]
        psi, dpsi = batch_cost_semantic(
            depths, payload, batch.d_r, batch.c_label, lengths,
            escape_depth=options["escape_depth"], semantic_weight=options["semantic_weight"],
            num_classes=aux.channels,
        )
    else:
        payload = aux.payload[safe]
        psi, dpsi = batch_cost_color(payload, batch.c_color, lengths)

    w = batch.weight
    losses = batch_loss(x, psi)
    gx = batch_grad_x(x, psi) * w[:, None]
    grad_x = np.bincount(safe[valid], weights=gx[valid], minlength=n_cells)
    grad_p = None
    if dpsi is not None:
        gp = batch_grad_p(x, dpsi) * w[:, None, None]
        grad_p = np.stack([
            np.bincount(safe[valid], weights=gp[..., c][valid], minlength=n_cells)
            for c in range(gp.shape[-1])
        ], axis=-1)
    return float(np.dot(w, losses)), grad_x, grad_p


def view_loss(
    grid: OccupancyGrid,
    aux: Optional[AuxGrid],
    observation: Observation,
    rays: RayBatch,
    *,
    escape_depth: Optional[float] = None,
    semantic_weight: float = 1.0,
    threads: int = 1,
    deterministic: bool = True,
    chunk_size: int = 4096,
) -> ViewLoss:
    """Weighted sum of ray losses over ``rays`` with grid-shaped gradients."""
    if len(rays) == 0:
        raise DataError("view_loss needs a nonempty ray set")
    if observation.kind in ("depth_semantics", "color"):
        if aux is None:
            raise DataError(f"{observation.kind} observations need an aux grid")
        expected = "semantics" if observation.kind == "depth_semantics" else "color"
        if aux.kind != expected:
            raise DataError(f"{observation.kind} observations need a {expected} aux grid, got {aux.kind}")
        require_same_geometry(grid.geometry, aux.geometry)
    options = {
        "escape_depth": observation.escape_depth if escape_depth is None else escape_depth,
        "semantic_weight": semantic_weight,
    }
    table = observation.trace_table(grid.geometry)

    def run(sl: slice):
        part = rays.take(sl)
        cells, depths, lengths = table.gather(part.pixels)
        return _batch_terms(grid, aux, observation, part, cells, depths, lengths, options)

    slices = chunk_slices(len(rays), chunk_size)
    if deterministic or threads <= 1 or len(slices) == 1:
        results = [run(sl) for sl in slices]
    else:
        with get_executor(threads) as executor:
            futures = [executor.submit(run, sl) for sl in slices]
            results = [fut.result() for fut in as_completed(futures)]

    loss = 0.0
    grad_x = np.zeros(grid.geometry.num_cells)
    grad_p = None
    for part_loss, part_gx, part_gp in results:
        loss += part_loss
        grad_x += part_gx
        if part_gp is not None:
            grad_p = part_gp if grad_p is None else grad_p + part_gp
    return ViewLoss(loss, grad_x, grad_p, len(rays))


def ray_costs(ray_trace, obs: RayObservation, p_r=None, *, escape_depth: Optional[float] = None,
              semantic_weight: float = 1.0) -> EventCosts:
    """Event costs for one ray given its observation."""
    if obs.kind == "mask":
        return cost_mask(ray_trace, obs.s_r)
    if obs.kind == "depth":
        return cost_depth(ray_trace, obs.d_r, ESCAPE_DEPTH_OBJECT if escape_depth is None else escape_depth)
    if obs.kind == "depth_semantics":
        return cost_semantic(ray_trace, p_r, obs.d_r, obs.c_r,
                             ESCAPE_DEPTH_SCENE if escape_depth is None else escape_depth, semantic_weight)
    if obs.kind == "color":
        return cost_color(ray_trace, p_r, obs.c_r)
    raise DataError(f"unknown ray observation kind {obs.kind!r}")

