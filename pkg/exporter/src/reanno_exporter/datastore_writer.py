"""Writer for the engine's binary datastore format and its JSONL sidecars.

Layout (little-endian): magic b"RANN", version u32 = 1, dim u32, count u64,
label block (u32 name count, per name u32 length + UTF-8), then per record
u32 id length + UTF-8 id, label u32, dim * f32. This mirrors the engine's
documented file schema; files written here are validated by reading them
back with the engine.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .examples import ExporterError

MAGIC = b"RANN"
VERSION = 1


def write_datastore_file(path, dim: int, label_names: list[str],
                         records: list[tuple[str, int, np.ndarray]]) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<IIQ", VERSION, dim, len(records))
    buf += struct.pack("<I", len(label_names))
    for name in label_names:
        raw = name.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
    seen = set()
    for id, label, vector in records:
        if id in seen:
            raise ExporterError(f"duplicate example id {id!r}")
        seen.add(id)
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (dim,):
            raise ExporterError(f"record {id!r}: vector length {vector.shape} != {dim}")
        if not np.all(np.isfinite(vector)):
            raise ExporterError(f"record {id!r}: non-finite embedding component")
        raw = id.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<I", label)
        buf += vector.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def write_metadata_sidecar(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")
