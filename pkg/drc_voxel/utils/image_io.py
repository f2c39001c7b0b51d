"""Netpbm (PGM/PPM) and PFM image files, written and read bit-exactly."""

from pathlib import Path
from typing import List, Tuple

import numpy as np

from drc_voxel.utils.errors import DataError


def _read_tokens(data: bytes, count: int) -> Tuple[List[bytes], int]:
    """First ``count`` whitespace-separated header tokens and the offset after them."""
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated image header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> Path:
    image = np.asarray(image)
    if image.ndim != 2:
        raise DataError("PGM images are single channel")
    if image.min(initial=0) < 0 or image.max(initial=0) > maxval:
        raise DataError(f"PGM values must lie in [0, {maxval}]")
    height, width = image.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(image.astype(np.uint8).tobytes())
    return path


def read_pgm(path) -> Tuple[np.ndarray, int]:
    data = Path(path).read_bytes()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise DataError(f"{path}: 16-bit PGM is not supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
    return raster.reshape(height, width).copy(), maxval


def write_ppm(path, image: np.ndarray) -> Path:
    """Float RGB in [0,1] quantized to 8 bits."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DataError("PPM images need shape (H, W, 3)")
    height, width, _ = image.shape
    raster = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM")
    width, height, maxval = (int(t) for t in tokens[1:])
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=offset)
    return raster.reshape(height, width, 3).astype(np.float64) / maxval


def write_pfm(path, image: np.ndarray) -> Path:
    """Single-channel little-endian PFM (scale -1.0), rows stored bottom to top."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise DataError("PFM depth images are single channel")
    height, width = image.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(np.flipud(image), dtype="<f4").tobytes())
    return path


def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != b"Pf":
        raise DataError(f"{path}: not a single-channel PFM")
    width, height = int(tokens[1]), int(tokens[2])
    scale = float(tokens[3])
    dtype = "<f4" if scale < 0 else ">f4"
    raster = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    return np.flipud(raster.reshape(height, width)).astype(np.float64)
