"""Portable Float Grid (PFG) serialization.

Layout: 4-byte magic ``PFG1``, three little-endian uint32 (H, W, C), then
H*W*C little-endian float32 values in row-major order (C fastest).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PFG1"
_HEADER = struct.Struct("<4sIII")


class PfgError(ValueError):
    """Raised for malformed PFG files."""


def write_pfg(path, grid: np.ndarray) -> None:
    """Write a 2D (H, W) or 3D (H, W, C) float grid to ``path``.

    Values are stored as float32; 2D input is written with C=1.
    """
    arr = np.asarray(grid)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise PfgError(f"PFG grids are 2D or 3D, got ndim={arr.ndim}")
    h, w, c = arr.shape
    data = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, h, w, c))
        fh.write(data.tobytes())


def read_pfg(path) -> np.ndarray:
    """Read a PFG file, returning a float32 array of shape (H, W, C).

    A C=1 grid is squeezed to (H, W).
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise PfgError(f"{path}: truncated header")
    magic, h, w, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise PfgError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + h * w * c * 4
    if len(raw) != expected:
        raise PfgError(f"{path}: expected {expected} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)
    if c == 1:
        arr = arr[:, :, 0]
    return arr.copy()
