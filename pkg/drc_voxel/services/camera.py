"""Calibrated cameras and per-pixel world-space rays.

Extrinsics are stored world->camera (p_cam = R p_world + t). The camera frame
is x right, y down, z forward, so pixel (u, v) of a perspective camera looks
along ((u - u0) / fu, (v - v0) / fv, 1).
"""

import math
from typing import Iterable, List, Literal, NamedTuple, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from drc_voxel.utils.errors import DataError


class Ray(NamedTuple):
    origin: np.ndarray
    direction: np.ndarray


def make_ray(origin, direction) -> Ray:
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if not norm > 0:
        raise DataError("ray direction must be nonzero")
    return Ray(np.asarray(origin, dtype=np.float64), direction / norm)


class Camera(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: Literal["perspective", "orthographic"]
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    # (fu, fv, u0, v0) in pixels, or (su, sv, u0, v0) with su/sv in meters per pixel
    intrinsics: Tuple[float, float, float, float]
    rotation: Tuple[float, float, float, float, float, float, float, float, float]
    translation: Tuple[float, float, float]

    @field_validator("intrinsics")
    @classmethod
    def _check_scale(cls, v):
        if not (v[0] > 0 and v[1] > 0):
            raise ValueError(f"intrinsic scales must be > 0, got {v[:2]}")
        return v

    @model_validator(mode="after")
    def _check_rotation(self) -> "Camera":
        r = self.R
        if not np.allclose(r @ r.T, np.eye(3), rtol=0.0, atol=1e-9):
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        return self

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    @property
    def center(self) -> np.ndarray:
        """Camera centre in the world frame."""
        return -self.R.T @ self.t

    @property
    def axes(self) -> np.ndarray:
        """Rows are the camera x, y, z axes expressed in the world frame."""
        return self.R

    @property
    def num_pixels(self) -> int:
        return self.width * self.height


def pixel_to_ray(camera: Camera, u: float, v: float) -> Ray:
    origins, directions = pixel_rays(camera, np.array([u], dtype=np.float64), np.array([v], dtype=np.float64))
    return Ray(origins[0], directions[0])


def pixel_rays(camera: Camera, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized pixel_to_ray; returns (origins, unit directions), each (N, 3)."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    a, b, u0, v0 = camera.intrinsics
    rot_t = camera.R.T
    if camera.model == "perspective":
        local = np.stack([(u - u0) / a, (v - v0) / b, np.ones_like(u)], axis=-1)
        directions = local @ camera.R
        directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
        origins = np.broadcast_to(camera.center, directions.shape).copy()
        return origins, directions
    local = np.stack([a * (u - u0), b * (v - v0), np.zeros_like(u)], axis=-1)
    origins = camera.center + local @ camera.R
    directions = np.broadcast_to(rot_t[:, 2], origins.shape).copy()
    return origins, directions


def pixel_centers(camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """(u, v) of every pixel centre, row-major (v outer), at integer + 0.5."""
    vv, uu = np.meshgrid(np.arange(camera.height), np.arange(camera.width), indexing="ij")
    return uu.reshape(-1) + 0.5, vv.reshape(-1) + 0.5


def project(camera: Camera, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    local = points @ camera.R.T + camera.t
    a, b, u0, v0 = camera.intrinsics
    if camera.model == "perspective":
        return a * local[:, 0] / local[:, 2] + u0, b * local[:, 1] / local[:, 2] + v0
    return local[:, 0] / a + u0, local[:, 1] / b + v0


def intrinsics_from_hfov(width: int, height: int, hfov: float) -> Tuple[float, float, float, float]:
    focal = (width / 2.0) / math.tan(math.radians(hfov) / 2.0)
    return focal, focal, width / 2.0, height / 2.0


def look_at(
    eye,
    target,
    up=(0.0, 1.0, 0.0),
    *,
    width: int,
    height: int,
    intrinsics: Tuple[float, float, float, float],
    model: str = "perspective",
) -> Camera:
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-12:
        raise DataError("look_at: up vector is parallel to the viewing direction")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    return Camera(
        model=model,
        width=width,
        height=height,
        intrinsics=tuple(float(c) for c in intrinsics),
        rotation=tuple(float(c) for c in rot.reshape(-1)),
        translation=tuple(float(c) for c in -rot @ eye),
    )


def forward_cameras(camera: Camera, offsets: Iterable[float]) -> List[Camera]:
    """Copies of ``camera`` moved along its own optical axis by each offset (meters)."""
    out: List[Camera] = []
    for offset in offsets:
        center = camera.center + float(offset) * camera.R[2]
        out.append(camera.model_copy(update={"translation": tuple(float(c) for c in -camera.R @ center)}))
    return out
