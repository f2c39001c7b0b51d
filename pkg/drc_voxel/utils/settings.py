import os
from typing import Any, Dict

from dotenv import load_dotenv

load_dotenv()

# Defaults can be overridden via CLI flags or environment variables
DEFAULT_THREADS = int(os.getenv("DRC_THREADS", "1"))
DEFAULT_LOG_LEVEL = os.getenv("DRC_LOG_LEVEL", "INFO")
DEFAULT_DETERMINISTIC = os.getenv("DRC_DETERMINISTIC", "1") not in ("0", "false", "False", "")

# Object-scale escape depth for the depth cost (meters)
ESCAPE_DEPTH_OBJECT = 10.0
# Scene-scale escape depth for the disparity/semantic cost (frustum far plane, meters)
ESCAPE_DEPTH_SCENE = 1000.0
# Floor inside -log p for the semantic cost
PROB_FLOOR = 1e-8
# Edge/corner tie-break offset applied to crossing parameters
TIE_EPS = 1e-12

DEFAULTS: Dict[str, Any] = {
    "grid_dims": 32,
    "grid_aabb_min": -0.5,
    "grid_aabb_max": 0.5,
    "frustum_dims": (64, 32, 32),
    "frustum_z_min": 0.5,
    "frustum_z_max": 1000.0,
    "frustum_hfov": 50.0,
    "image_size": 64,
    "camera_hfov": 40.0,
    "camera_radius": 2.5,
    "elevation_min": -20.0,
    "elevation_max": 30.0,
    "views": 5,
    "noise": 0.0,
    "escape_depth_object": ESCAPE_DEPTH_OBJECT,
    "escape_depth_scene": ESCAPE_DEPTH_SCENE,
    "prob_floor": PROB_FLOOR,
    "semantic_weight": 1.0,
    "num_classes": 4,
    "iterations": 500,
    "step_size": 0.05,
    "rays_per_iteration": 3000,
    "views_per_iteration": 0,
    "foreground_weight": 5.0,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "seed": 0,
    "threshold_step": 0.01,
    "gradcheck_h": 1e-6,
    "gradcheck_rtol": 1e-5,
    "gradcheck_atol": 1e-8,
    "threads": DEFAULT_THREADS,
}
