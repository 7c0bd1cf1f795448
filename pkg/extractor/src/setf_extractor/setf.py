"""SETF feature-grid files: the wire format consumed by the scoring side.

Layout (little-endian): magic "SETF", u32 version = 1, u8 dtype code
(1 = float32 LE), u32 rank = 3, u32 dims H, W, D, then H*W*D raw values.
One file per (sample, level).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SETF"
VERSION = 1
DTYPE_F32 = 1
RANK = 3


def write_grid(values: np.ndarray, path) -> None:
    """Write an (H, W, D) float grid as a SETF blob."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"grid must be rank 3, got shape {arr.shape}")
    h, w, d = arr.shape
    blob = b"".join([
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<B", DTYPE_F32),
        struct.pack("<IIII", RANK, h, w, d),
        arr.tobytes(),
    ])
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def read_header(path) -> tuple[int, int, int]:
    """Validate a SETF header and return (H, W, D)."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    (dtype_code,) = struct.unpack_from("<B", blob, 8)
    if dtype_code != DTYPE_F32:
        raise ValueError(f"{path}: unsupported dtype code {dtype_code}")
    rank, h, w, d = struct.unpack_from("<IIII", blob, 9)
    if rank != RANK:
        raise ValueError(f"{path}: rank must be {RANK}, got {rank}")
    expected = 25 + 4 * h * w * d
    if len(blob) != expected:
        raise ValueError(f"{path}: {len(blob)} bytes, expected {expected}")
    return h, w, d


def read_grid(path) -> np.ndarray:
    h, w, d = read_header(path)
    blob = Path(path).read_bytes()
    return np.frombuffer(blob, dtype="<f4", count=h * w * d, offset=25).reshape(h, w, d)
