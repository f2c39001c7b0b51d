"""Camera files: YAML with fields model, width, height, intrinsics, rotation, translation.

``rotation`` is the 3x3 world-to-camera rotation written row-major as nine
numbers; ``translation`` completes the world-to-camera transform.
"""

from pathlib import Path

import yaml
from pydantic import ValidationError

from drc_voxel.services.camera import Camera
from drc_voxel.utils.errors import DataError


def camera_to_dict(camera: Camera) -> dict:
    data = camera.model_dump()
    return {k: [float(e) for e in v] if isinstance(v, tuple) else v for k, v in data.items()}


def write_camera(path, camera: Camera) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(camera_to_dict(camera), fh, sort_keys=False, default_flow_style=None)
    return path


def read_camera(path) -> Camera:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise DataError(f"{path}: malformed camera file: {e}") from e
    if not isinstance(data, dict):
        raise DataError(f"{path}: camera file must be a mapping")
    try:
        return Camera.model_validate(data)
    except ValidationError as e:
        raise DataError(f"{path}: invalid camera: {e}") from e
