"""Binary snapshots of float64 arrays.

Layout: 8-byte magic, uint32 version, uint32 ndim (16-byte header), then
ndim int64 dimensions, then row-major float64 data; all little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CTMSNAP1"
VERSION = 1


def write_snapshot(path, array) -> Path:
    a = np.asarray(array, dtype="<f8", order="C")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, a.ndim))
        fh.write(np.asarray(a.shape, dtype="<i8").tobytes())
        fh.write(a.tobytes(order="C"))
    return path


def read_snapshot(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:8] != MAGIC:
            raise ValueError(f"{path}: not a snapshot file")
        version, ndim = struct.unpack("<II", head[8:])
        if version != VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        shape = tuple(int(n) for n in np.frombuffer(fh.read(8 * ndim), dtype="<i8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: truncated data")
    return data.reshape(shape).astype(float)
