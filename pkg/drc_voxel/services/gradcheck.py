"""Finite-difference verification of the analytic ray-loss gradients."""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from drc_voxel.services.consistency import (
    batch_cost_color,
    batch_cost_depth,
    batch_cost_mask,
    batch_cost_semantic,
    batch_grad_p,
    batch_grad_x,
    batch_loss,
)
from drc_voxel.utils.errors import UsageError
from drc_voxel.utils.settings import DEFAULTS

logger = logging.getLogger(__name__)

GRADCHECK_KINDS = ("mask", "depth", "depth_semantics", "color")
MAX_CELLS = 12
NUM_CLASSES = 4


def central_difference(func: Callable[[np.ndarray], float], x0: np.ndarray, h: float) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    x = x0.copy()
    for j in range(x0.size):
        x.flat[j] = x0.flat[j] + h
        fplus = func(x)
        x.flat[j] = x0.flat[j] - h
        fminus = func(x)
        x.flat[j] = x0.flat[j]
        grad.flat[j] = (fplus - fminus) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float) -> float:
    """Largest relative error over entries whose absolute error exceeds atol."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff > atol, diff / np.maximum(scale, np.finfo(float).tiny), 0.0)
    return float(rel.max(initial=0.0))


@dataclass
class GradcheckReport:
    kind: str
    trials: int
    max_rel_err_x: float
    max_rel_err_p: float
    rtol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err_x < self.rtol and self.max_rel_err_p < self.rtol

    def lines(self):
        status = "PASS" if self.passed else "FAIL"
        return [
            f"kind\t{self.kind}",
            f"trials\t{self.trials}",
            f"max_rel_err_x\t{self.max_rel_err_x:.3e}",
            f"max_rel_err_p\t{self.max_rel_err_p:.3e}",
            f"status\t{status}",
        ]


def random_instance(kind: str, rng: np.random.Generator):
    """A random ray: emptiness x, increasing cell depths, payload and observation."""
    n = int(rng.integers(1, MAX_CELLS + 1))
    x = rng.uniform(0.02, 0.98, size=n)
    depths = np.cumsum(rng.uniform(0.05, 0.5, size=n)) + rng.uniform(0.5, 2.0)
    payload = None
    if kind == "mask":
        obs = int(rng.integers(0, 2))
    elif kind == "depth":
        obs = float(rng.uniform(0.3, 6.0))
    elif kind == "depth_semantics":
        payload = 0.5 * rng.dirichlet(np.ones(NUM_CLASSES), size=n) + 0.5 / NUM_CLASSES
        obs = (float(rng.uniform(0.3, 6.0)), int(rng.integers(0, NUM_CLASSES)))
    else:
        payload = rng.uniform(0.0, 1.0, size=(n, 3))
        obs = rng.uniform(0.0, 1.0, size=3)
    return x, depths, payload, obs


def ray_costs_for(kind: str, depths: np.ndarray, payload, obs) -> Tuple[np.ndarray, object]:
    d = depths[None, :]
    lengths = np.array([depths.size])
    if kind == "mask":
        return batch_cost_mask(d, np.array([obs]), lengths)[0], None
    if kind == "depth":
        return batch_cost_depth(d, np.array([obs]), lengths)[0], None
    if kind == "depth_semantics":
        psi, dpsi = batch_cost_semantic(d, payload[None], np.array([obs[0]]), np.array([obs[1]]), lengths)
        return psi[0], dpsi[0]
    psi, dpsi = batch_cost_color(payload[None], np.asarray(obs)[None], lengths)
    return psi[0], dpsi[0]


def check_ray_gradients(
    kind: str,
    trials: int,
    seed: int = 0,
    *,
    h: float = DEFAULTS["gradcheck_h"],
    rtol: float = DEFAULTS["gradcheck_rtol"],
    atol: float = DEFAULTS["gradcheck_atol"],
    inject_bug: bool = False,
) -> GradcheckReport:
    """Compare analytic d/dx and d/dp against central differences on random rays."""
    if kind not in GRADCHECK_KINDS:
        raise UsageError(f"unknown gradcheck kind {kind!r}")
    if trials < 1:
        raise UsageError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    worst_x = 0.0
    worst_p = 0.0
    for _ in range(trials):
        x, depths, payload, obs = random_instance(kind, rng)
        psi, dpsi = ray_costs_for(kind, depths, payload, obs)

        analytic_x = batch_grad_x(x[None], psi[None])[0]
        if inject_bug:
            # deliberately wrong gradient, the check must reject it
            analytic_x = analytic_x * (1.0 + 1e-3)
        numeric_x = central_difference(lambda v: float(batch_loss(v[None], psi[None])[0]), x, h)
        worst_x = max(worst_x, max_relative_error(analytic_x, numeric_x, atol))

        if dpsi is not None:
            analytic_p = batch_grad_p(x[None], dpsi[None])[0]

            def loss_of_payload(p):
                psi_p, _ = ray_costs_for(kind, depths, p, obs)
                return float(batch_loss(x[None], psi_p[None])[0])

            numeric_p = central_difference(loss_of_payload, payload, h)
            worst_p = max(worst_p, max_relative_error(analytic_p, numeric_p, atol))

    report = GradcheckReport(kind, trials, worst_x, worst_p, rtol)
    logger.info("[gradcheck] kind=%s trials=%d max_rel_err_x=%.3e max_rel_err_p=%.3e",
                kind, trials, worst_x, worst_p)
    return report
