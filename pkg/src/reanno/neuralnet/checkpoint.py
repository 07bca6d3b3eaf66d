"""Parameter checkpoint file: named float64 tensors, little-endian.

Layout: magic b"RNCK", version u32, tensor count u32, then per tensor:
u32 name-length + UTF-8 name, u32 ndim, ndim * u64 dims, row-major f64 data.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

MAGIC = b"RNCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_params(params: dict[str, Tensor], path) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<II", VERSION, len(params))
    for name in sorted(params):
        raw = name.encode("utf-8")
        # astype keeps 0-d shapes, unlike ascontiguousarray
        data = np.asarray(params[name].data).astype("<f8", copy=True)
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<I", data.ndim)
        buf += struct.pack(f"<{data.ndim}Q", *data.shape) if data.ndim else b""
        buf += data.tobytes()
    Path(path).write_bytes(bytes(buf))


def load_params(path) -> dict[str, Tensor]:
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = data[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    params: dict[str, Tensor] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim)) if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape)
        params[name] = Tensor(np.array(arr, dtype=np.float64))
    return params
