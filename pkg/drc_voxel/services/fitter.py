"""Single-instance reconstruction by gradient descent on the ray consistency loss.

The grid itself is the optimized parameter. Emptiness probabilities are held
as logits and squashed with a sigmoid; aux payloads use a per-channel sigmoid
(color) or a per-cell softmax (semantics). Each iteration samples views and
rays, evaluates view losses, chain-rules through the squashing maps and takes
one Adam step.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from drc_voxel.services.consistency import RayBatch, all_rays, ray_batch, view_loss
from drc_voxel.services.grid import AuxGrid, GridGeometry, OccupancyGrid
from drc_voxel.services.observation import Observation
from drc_voxel.utils.errors import DataError
from drc_voxel.utils.optim import Adam, sigmoid, sigmoid_backward, softmax, softmax_backward
from drc_voxel.utils.settings import DEFAULT_DETERMINISTIC, DEFAULT_THREADS, DEFAULTS

logger = logging.getLogger(__name__)

MIXABLE_KINDS = ("mask", "depth")
# all views are used per iteration up to this many
ALL_VIEWS_UP_TO = 5
VIEWS_WHEN_MANY = 3


class FitConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    iterations: int = Field(default=DEFAULTS["iterations"], ge=0)
    step_size: float = Field(default=DEFAULTS["step_size"], gt=0)
    rays_per_iteration: int = Field(default=DEFAULTS["rays_per_iteration"], ge=1)
    # 0 = all views when there are at most 5, otherwise 3
    views_per_iteration: int = Field(default=DEFAULTS["views_per_iteration"], ge=0)
    foreground_weight: float = Field(default=DEFAULTS["foreground_weight"], gt=0)
    seed: int = DEFAULTS["seed"]
    x_param: Literal["logit"] = "logit"
    aux_param: Optional[Literal["logit-per-channel", "logit-softmax"]] = None
    beta1: float = Field(default=DEFAULTS["beta1"], ge=0, lt=1)
    beta2: float = Field(default=DEFAULTS["beta2"], ge=0, lt=1)
    epsilon: float = Field(default=DEFAULTS["epsilon"], gt=0)
    semantic_weight: float = Field(default=DEFAULTS["semantic_weight"], gt=0)
    full_image: bool = False
    threads: int = Field(default=DEFAULT_THREADS, ge=1)
    deterministic: bool = DEFAULT_DETERMINISTIC
    progress: bool = False


@dataclass
class FitReport:
    losses: List[float] = field(default_factory=list)
    per_kind: List[Dict[str, float]] = field(default_factory=list)
    rays: List[int] = field(default_factory=list)
    wall_time: float = 0.0
    grid: Optional[OccupancyGrid] = None
    aux: Optional[AuxGrid] = None

    def loss_log_lines(self) -> List[str]:
        kinds = sorted({k for row in self.per_kind for k in row})
        lines = ["\t".join(["iteration", "loss", "loss_per_ray", *kinds])]
        for i, (loss, row, n) in enumerate(zip(self.losses, self.per_kind, self.rays)):
            cells = [repr(float(loss)), repr(float(loss) / max(n, 1))]
            cells += [repr(float(row.get(k, 0.0))) for k in kinds]
            lines.append("\t".join([str(i), *cells]))
        return lines


def sample_rays(
    observation: Observation,
    n: int,
    foreground_weight: float,
    seed: int,
    iteration: int,
    *,
    stream: int = 0,
) -> RayBatch:
    """n pixels drawn uniformly with replacement; foreground rays weighted up."""
    if n < 1:
        raise DataError(f"need at least one ray, got {n}")
    rng = np.random.default_rng([int(seed), int(iteration), int(stream)])
    pixels = rng.integers(0, observation.num_pixels, size=n)
    weight = np.where(observation.foreground()[pixels], foreground_weight, 1.0)
    return ray_batch(observation, pixels, weight)


def split_budget(total: int, parts: int) -> List[int]:
    """Ray budget per view; the first views take the remainder."""
    base, extra = divmod(total, parts)
    return [max(1, base + (1 if i < extra else 0)) for i in range(parts)]


def _resolve_kind(observations: Sequence[Observation], kind: Optional[str]) -> str:
    kinds = {o.kind for o in observations}
    if kind in (None, "mixed"):
        if len(kinds) == 1:
            return kinds.pop()
        if kinds <= set(MIXABLE_KINDS):
            return "mixed"
        raise DataError(f"only {'/'.join(MIXABLE_KINDS)} observations can be mixed, got {sorted(kinds)}")
    if kinds != {kind}:
        raise DataError(f"fit kind {kind!r} does not match observation kinds {sorted(kinds)}")
    return kind


def _init_aux(kind: str, geometry: GridGeometry, observations: Sequence[Observation], config: FitConfig):
    if kind == "color":
        param = config.aux_param or "logit-per-channel"
        if param != "logit-per-channel":
            raise DataError("color payloads use the logit-per-channel parameterization")
        return "color", param, np.zeros((geometry.num_cells, 3))
    if kind == "depth_semantics":
        param = config.aux_param or "logit-softmax"
        if param != "logit-softmax":
            raise DataError("semantic payloads use the logit-softmax parameterization")
        k = observations[0].num_classes
        if any(o.num_classes != k for o in observations):
            raise DataError("semantic observations disagree on the number of classes")
        return "semantics", param, np.zeros((geometry.num_cells, k))
    return None, None, None


def _squash_aux(param: str, phi: np.ndarray) -> np.ndarray:
    return sigmoid(phi) if param == "logit-per-channel" else softmax(phi)


def fit(
    observations: Sequence[Observation],
    geometry: GridGeometry,
    kind: Optional[str],
    config: FitConfig = FitConfig(),
) -> Tuple[OccupancyGrid, Optional[AuxGrid], FitReport]:
    if not observations:
        raise DataError("fit needs at least one observation")
    kind = _resolve_kind(observations, kind)
    aux_kind, aux_param, phi = _init_aux(kind, geometry, observations, config)
    theta = np.zeros(geometry.num_cells)
    params: Dict[str, np.ndarray] = {"x": theta}
    if phi is not None:
        params["p"] = phi
    optimizer = Adam(lr=config.step_size, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon)
    view_rng = np.random.default_rng([int(config.seed), 0x5EED])

    n_views = len(observations)
    per_iter = config.views_per_iteration
    if per_iter == 0:
        per_iter = n_views if n_views <= ALL_VIEWS_UP_TO else VIEWS_WHEN_MANY
    per_iter = min(per_iter, n_views)

    report = FitReport()
    start = time.perf_counter()
    logger.info("[fit] kind=%s views=%d cells=%d iterations=%d", kind, n_views, geometry.num_cells, config.iterations)
    iterator = range(config.iterations)
    if config.progress:
        iterator = tqdm(iterator, desc="fit", unit="it")
    for it in iterator:
        x = sigmoid(params["x"])
        grid = OccupancyGrid(geometry, x)
        aux = AuxGrid(geometry, aux_kind, _squash_aux(aux_param, params["p"])) if phi is not None else None
        views = np.arange(n_views) if per_iter == n_views else np.sort(view_rng.choice(n_views, per_iter, replace=False))
        budgets = split_budget(config.rays_per_iteration, len(views))

        loss = 0.0
        rays = 0
        grad_x = np.zeros(geometry.num_cells)
        grad_p = np.zeros_like(params["p"]) if phi is not None else None
        per_kind: Dict[str, float] = {}
        for v, budget in zip(views, budgets):
            obs = observations[int(v)]
            if config.full_image:
                batch = all_rays(obs, config.foreground_weight)
            else:
                batch = sample_rays(obs, budget, config.foreground_weight, config.seed, it, stream=int(v))
            result = view_loss(
                grid, aux, obs, batch,
                semantic_weight=config.semantic_weight,
                threads=config.threads,
                deterministic=config.deterministic,
            )
            loss += result.loss
            rays += result.num_rays
            grad_x += result.grad_x
            if grad_p is not None and result.grad_p is not None:
                grad_p += result.grad_p
            per_kind[obs.kind] = per_kind.get(obs.kind, 0.0) + result.loss

        grads = {"x": sigmoid_backward(grad_x, x)}
        if phi is not None:
            backward = sigmoid_backward if aux_param == "logit-per-channel" else softmax_backward
            grads["p"] = backward(grad_p, aux.payload)
        optimizer.step(params, grads)

        report.losses.append(loss)
        report.per_kind.append(per_kind)
        report.rays.append(rays)
        if it % 50 == 0 or it == config.iterations - 1:
            logger.info("[fit] iter=%d loss=%.6g loss_per_ray=%.6g", it, loss, loss / max(rays, 1))

    final_grid = OccupancyGrid(geometry, sigmoid(params["x"]))
    final_aux = AuxGrid(geometry, aux_kind, _squash_aux(aux_param, params["p"])) if phi is not None else None
    report.wall_time = time.perf_counter() - start
    report.grid = final_grid
    report.aux = final_aux
    logger.info("[fit] done iterations=%d wall_time=%.2fs", config.iterations, report.wall_time)
    return final_grid, final_aux, report
