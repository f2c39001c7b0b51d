"""Image-plus-camera observations and the per-ray values they carry."""

from dataclasses import dataclass, field
from typing import Dict, Literal, Optional

import numpy as np

from drc_voxel.services.camera import Camera, pixel_centers, pixel_rays
from drc_voxel.services.grid import GridGeometry
from drc_voxel.services.traversal import TraceTable, trace_many
from drc_voxel.utils.errors import DataError

KINDS = ("mask", "depth", "depth_semantics", "color")
ObservationKind = Literal["mask", "depth", "depth_semantics", "color"]

# channels each kind must carry
REQUIRED_CHANNELS = {
    "mask": ("mask",),
    "depth": ("depth",),
    "depth_semantics": ("depth", "labels"),
    "color": ("color",),
}


@dataclass(frozen=True)
class Observation:
    """One view. ``mask`` is 1 on foreground pixels (the ray hits the object).

    Depth images hold ``escape_depth`` on background pixels; class-id images
    hold ``num_classes - 1`` on background pixels.
    """

    kind: ObservationKind
    camera: Camera
    mask: Optional[np.ndarray] = field(default=None, repr=False)
    depth: Optional[np.ndarray] = field(default=None, repr=False)
    labels: Optional[np.ndarray] = field(default=None, repr=False)
    color: Optional[np.ndarray] = field(default=None, repr=False)
    num_classes: int = 0
    escape_depth: float = 10.0
    _traces: Dict[GridGeometry, TraceTable] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown observation kind {self.kind!r}")
        shape = (self.camera.height, self.camera.width)
        for name in REQUIRED_CHANNELS[self.kind]:
            channel = getattr(self, name)
            if channel is None:
                raise DataError(f"{self.kind} observation is missing its {name} channel")
            if channel.shape[:2] != shape:
                raise DataError(f"{name} channel has shape {channel.shape[:2]}, camera expects {shape}")
        if self.mask is not None:
            object.__setattr__(self, "mask", np.asarray(self.mask, dtype=np.uint8))
            if np.any(self.mask > 1):
                raise DataError("mask pixels must be 0 or 1")
        if self.depth is not None:
            object.__setattr__(self, "depth", np.asarray(self.depth, dtype=np.float64))
            if not np.all(self.depth > 0):
                raise DataError("depth pixels must be > 0")
        if self.labels is not None:
            object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
            if self.num_classes < 1 or np.any(self.labels < 0) or np.any(self.labels >= self.num_classes):
                raise DataError(f"class ids must lie in [0, {self.num_classes})")
        if self.color is not None:
            object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64))

    @property
    def width(self) -> int:
        return self.camera.width

    @property
    def height(self) -> int:
        return self.camera.height

    @property
    def num_pixels(self) -> int:
        return self.camera.num_pixels

    def foreground(self) -> np.ndarray:
        """Flat boolean foreground map used for ray weighting."""
        if self.kind == "mask":
            return self.mask.reshape(-1) == 1
        if self.kind in ("depth", "depth_semantics"):
            return self.depth.reshape(-1) < self.escape_depth
        return np.any(self.color.reshape(-1, 3) < 1.0, axis=-1)

    def rays(self, pixels: Optional[np.ndarray] = None):
        """World rays through the centres of the given flat pixel ids (all by default)."""
        u, v = pixel_centers(self.camera)
        if pixels is not None:
            u, v = u[pixels], v[pixels]
        return pixel_rays(self.camera, u, v)

    def trace_table(self, geometry: GridGeometry) -> TraceTable:
        """Traces of every pixel ray, computed once per geometry."""
        table = self._traces.get(geometry)
        if table is None:
            origins, directions = self.rays()
            table = trace_many(geometry, origins, directions)
            self._traces[geometry] = table
        return table
