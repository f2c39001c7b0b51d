"""Observation bundles.

A bundle is one directory per view::

    view_000/
        camera.yaml
        manifest.yaml      {kind: depth, num_classes: 0, escape_depth: 10.0}
        depth.pfm          (mask.pgm, labels.pgm, color.ppm by kind)
"""

import logging
from pathlib import Path
from typing import List, Sequence

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from drc_voxel.services.observation import Observation, ObservationKind
from drc_voxel.utils.camera_io import read_camera, write_camera
from drc_voxel.utils.errors import DataError
from drc_voxel.utils.image_io import read_pfm, read_pgm, read_ppm, write_pfm, write_pgm, write_ppm
from drc_voxel.utils.settings import ESCAPE_DEPTH_OBJECT

logger = logging.getLogger(__name__)

CAMERA_FILE = "camera.yaml"
MANIFEST_FILE = "manifest.yaml"
VIEW_PREFIX = "view_"


class BundleManifest(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ObservationKind
    num_classes: int = Field(default=0, ge=0)
    escape_depth: float = Field(default=ESCAPE_DEPTH_OBJECT, gt=0)


def view_dir(root, index: int) -> Path:
    return Path(root) / f"{VIEW_PREFIX}{index:03d}"


def write_bundle(directory, observation: Observation) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_camera(directory / CAMERA_FILE, observation.camera)
    manifest = BundleManifest(
        kind=observation.kind,
        num_classes=observation.num_classes,
        escape_depth=float(observation.escape_depth),
    )
    with open(directory / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        # one line, flow style
        yaml.safe_dump(manifest.model_dump(), fh, default_flow_style=True, width=1 << 16)
    kind = observation.kind
    if kind == "mask":
        write_pgm(directory / "mask.pgm", observation.mask, maxval=1)
    if kind in ("depth", "depth_semantics"):
        write_pfm(directory / "depth.pfm", observation.depth)
    if kind == "depth_semantics":
        if observation.num_classes > 256:
            raise DataError("class-id images hold at most 256 classes")
        write_pgm(directory / "labels.pgm", observation.labels, maxval=255)
    if kind == "color":
        write_ppm(directory / "color.ppm", observation.color)
    return directory


def _read_manifest(directory: Path) -> BundleManifest:
    path = directory / MANIFEST_FILE
    if not path.is_file():
        raise FileNotFoundError(f"missing bundle manifest {path}")
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    try:
        return BundleManifest.model_validate(data or {})
    except ValidationError as e:
        raise DataError(f"{path}: invalid bundle manifest: {e}") from e


def read_bundle(directory) -> Observation:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no observation bundle at {directory}")
    manifest = _read_manifest(directory)
    camera = read_camera(directory / CAMERA_FILE)
    fields = {}
    if manifest.kind == "mask":
        mask, _ = read_pgm(directory / "mask.pgm")
        fields["mask"] = mask
    if manifest.kind in ("depth", "depth_semantics"):
        fields["depth"] = read_pfm(directory / "depth.pfm")
    if manifest.kind == "depth_semantics":
        labels, _ = read_pgm(directory / "labels.pgm")
        fields["labels"] = labels.astype(np.int64)
    if manifest.kind == "color":
        fields["color"] = read_ppm(directory / "color.ppm")
    return Observation(
        manifest.kind,
        camera,
        num_classes=manifest.num_classes,
        escape_depth=manifest.escape_depth,
        **fields,
    )


def write_bundles(root, observations: Sequence[Observation]) -> List[Path]:
    return [write_bundle(view_dir(root, i), obs) for i, obs in enumerate(observations)]


def read_bundles(root) -> List[Observation]:
    """Every view below ``root`` in name order; ``root`` may itself be a single bundle."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"no observation directory at {root}")
    if (root / MANIFEST_FILE).is_file():
        return [read_bundle(root)]
    views = sorted(p for p in root.iterdir() if p.is_dir() and (p / MANIFEST_FILE).is_file())
    if not views:
        raise DataError(f"{root} contains no observation bundles")
    observations = [read_bundle(p) for p in views]
    logger.info("[bundle] read %d views from %s kinds=%s", len(observations), root,
                ",".join(sorted({o.kind for o in observations})))
    return observations


