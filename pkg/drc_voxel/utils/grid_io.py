"""DRC-GRID v1 files.

Header line (UTF-8):

    DRC-GRID v1 <kind> <nx> <ny> <nz> <geom-params...> <aux:none|color|sem:K> [key=value ...]

kind is ``uniform`` (6 params: AABB min, max) or ``frustum`` (alpha1, alpha2, f).
Occupancy grids follow with little-endian float64 emptiness values in x-fastest
order, then the aux payload cell-major. Binary grids use kind ``bin`` (the
geometry kind is implied by the parameter count) and one byte per cell.
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from drc_voxel.services.grid import AuxGrid, BinaryGrid, GridGeometry, OccupancyGrid
from drc_voxel.utils.errors import DataError

logger = logging.getLogger(__name__)

MAGIC = "DRC-GRID"
VERSION = "v1"
_PARAM_COUNT = {"uniform": 6, "frustum": 3}


def _aux_token(aux: Optional[AuxGrid]) -> str:
    if aux is None:
        return "none"
    return "color" if aux.kind == "color" else f"sem:{aux.channels}"


def _header(tag: str, geometry: GridGeometry, aux_token: str, tags: Optional[Dict[str, str]]) -> bytes:
    parts = [MAGIC, VERSION, tag, *(str(d) for d in geometry.dims), *geometry.header_params(), aux_token]
    for key, value in sorted((tags or {}).items()):
        parts.append(f"{key}={value}")
    return (" ".join(parts) + "\n").encode("utf-8")


def write_grid(path, grid: OccupancyGrid, aux: Optional[AuxGrid] = None, tags: Optional[Dict[str, str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_header(grid.geometry.kind, grid.geometry, _aux_token(aux), tags))
        fh.write(np.ascontiguousarray(grid.x, dtype="<f8").tobytes())
        if aux is not None:
            fh.write(np.ascontiguousarray(aux.payload, dtype="<f8").tobytes())
    logger.debug("[grid_io] wrote %s", path)
    return path


def write_binary_grid(path, binary: BinaryGrid, tags: Optional[Dict[str, str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_header("bin", binary.geometry, "none", tags))
        fh.write(binary.occ.astype(np.uint8).tobytes())
    return path


def _parse_header(line: bytes):
    try:
        tokens = line.decode("utf-8").split()
    except UnicodeDecodeError as e:
        raise DataError(f"grid header is not UTF-8: {e}") from e
    if len(tokens) < 7 or tokens[0] != MAGIC or tokens[1] != VERSION:
        raise DataError("not a DRC-GRID v1 file")
    tag = tokens[2]
    try:
        dims = tuple(int(t) for t in tokens[3:6])
    except ValueError as e:
        raise DataError(f"bad grid dims in header: {tokens[3:6]}") from e
    rest = tokens[6:]
    aux_at = next((i for i, t in enumerate(rest) if t == "none" or t == "color" or t.startswith("sem:")), None)
    if aux_at is None:
        raise DataError("grid header is missing its aux token")
    params = [float(t) for t in rest[:aux_at]]
    aux_token = rest[aux_at]
    tags = dict(t.split("=", 1) for t in rest[aux_at + 1:] if "=" in t)
    kind = tag
    if tag == "bin":
        kind = next((k for k, n in _PARAM_COUNT.items() if n == len(params)), None)
    if kind not in _PARAM_COUNT or len(params) != _PARAM_COUNT[kind]:
        raise DataError(f"bad geometry in grid header: kind={tag} params={len(params)}")
    if kind == "uniform":
        geometry = GridGeometry(kind="uniform", dims=dims, aabb_min=tuple(params[:3]), aabb_max=tuple(params[3:]))
    else:
        geometry = GridGeometry(kind="frustum", dims=dims, alpha1=params[0], alpha2=params[1], f=params[2])
    return tag, geometry, aux_token, tags


def read_grid_header(path) -> Tuple[str, GridGeometry, str, Dict[str, str]]:
    with open(path, "rb") as fh:
        return _parse_header(fh.readline())


def read_grid(path) -> Tuple[OccupancyGrid, Optional[AuxGrid], Dict[str, str]]:
    with open(path, "rb") as fh:
        tag, geometry, aux_token, tags = _parse_header(fh.readline())
        body = fh.read()
    if tag == "bin":
        raise DataError(f"{path} holds a binary grid; use read_binary_grid")
    n = geometry.num_cells
    channels = 0 if aux_token == "none" else (3 if aux_token == "color" else int(aux_token.split(":", 1)[1]))
    expected = 8 * n * (1 + channels)
    if len(body) != expected:
        raise DataError(f"{path}: expected {expected} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    grid = OccupancyGrid(geometry, values[:n])
    aux = None
    if channels:
        kind = "color" if aux_token == "color" else "semantics"
        aux = AuxGrid(geometry, kind, values[n:].reshape(n, channels))
    return grid, aux, tags


def read_binary_grid(path) -> BinaryGrid:
    with open(path, "rb") as fh:
        tag, geometry, _, _ = _parse_header(fh.readline())
        body = fh.read()
    if tag != "bin":
        raise DataError(f"{path} is not a binary grid (kind {tag})")
    if len(body) != geometry.num_cells:
        raise DataError(f"{path}: expected {geometry.num_cells} data bytes, found {len(body)}")
    return BinaryGrid(geometry, np.frombuffer(body, dtype=np.uint8) != 0)
