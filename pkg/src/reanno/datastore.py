"""Embedding datastore: binary format, label space, folds, synthetic fixtures.

Binary layout (little-endian throughout):

    magic   b"RANN"
    version u32 (currently 1)
    dim     u32
    count   u64
    labels  u32 name-count, then per name: u32 byte-length + UTF-8 bytes
    records per record: u32 id-length + UTF-8 id, u32 label, dim * f32

Example metadata lives in a JSONL sidecar keyed by id, never in the binary
file. Revision files (true labels) are JSONL records {"id", "revised_label"}.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

MAGIC = b"RANN"
FORMAT_VERSION = 1


class DatastoreError(ValueError):
    """Raised for malformed datastore files or invariant violations."""


@dataclass(frozen=True)
class LabelSpace:
    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise DatastoreError("label names must be unique")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self._index[name]

    def name(self, idx: int) -> str:
        return self.names[idx]


@dataclass
class EmbeddingRecord:
    id: str
    vector: np.ndarray  # float32, length == datastore dim
    observed_label: int


@dataclass
class ExampleMetadata:
    context: str
    head_span: tuple[int, int]
    tail_span: tuple[int, int]
    head_type: Optional[str] = None
    tail_type: Optional[str] = None

    def validate(self):
        n = len(self.context)
        for lo, hi in (self.head_span, self.tail_span):
            if not (0 <= lo <= hi <= n):
                raise DatastoreError("entity span outside context bounds")
        if tuple(self.head_span) == tuple(self.tail_span):
            raise DatastoreError("head span equals tail span")


@dataclass
class Datastore:
    dim: int
    records: list[EmbeddingRecord]
    labels: LabelSpace

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.dim <= 0:
            raise DatastoreError("dim must be positive")
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DatastoreError(f"duplicate id {rec.id!r}")
            seen.add(rec.id)
            if rec.vector.shape != (self.dim,):
                raise DatastoreError(
                    f"record {rec.id!r}: vector length {rec.vector.shape[0]} != dim {self.dim}"
                )
            if not np.all(np.isfinite(rec.vector)):
                raise DatastoreError(f"record {rec.id!r}: non-finite component")
            if not (0 <= rec.observed_label < len(self.labels)):
                raise DatastoreError(
                    f"record {rec.id!r}: label index {rec.observed_label} "
                    f"outside label space of size {len(self.labels)}"
                )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def by_id(self, id: str) -> EmbeddingRecord:
        if not hasattr(self, "_by_id") or len(self._by_id) != len(self.records):
            self._by_id = {r.id: r for r in self.records}
        return self._by_id[id]

    def matrix(self, dtype=np.float64) -> np.ndarray:
        if len(self.records) == 0:
            return np.zeros((0, self.dim), dtype=dtype)
        return np.stack([r.vector for r in self.records]).astype(dtype)

    def observed(self) -> np.ndarray:
        return np.array([r.observed_label for r in self.records], dtype=np.int64)

    def subset(self, ids: Iterable[str]) -> "Datastore":
        keep = set(ids)
        recs = [r for r in self.records if r.id in keep]
        return Datastore(self.dim, recs, self.labels)


@dataclass
class SplitSpec:
    n_folds: int
    assignment: dict[str, int]

    def fold_ids(self, fold: int) -> list[str]:
        return [i for i, f in self.assignment.items() if f == fold]

    def validate_over(self, store: Datastore):
        ids = set(store.ids)
        if set(self.assignment) != ids:
            raise DatastoreError("fold assignment does not partition the id set")
        sizes = [len(self.fold_ids(f)) for f in range(self.n_folds)]
        if max(sizes) - min(sizes) > 1:
            raise DatastoreError("fold sizes differ by more than one")


@dataclass
class RevisionFile:
    entries: dict[str, int]  # id -> revised label index

    def validate_over(self, store: Datastore):
        known = set(store.ids)
        for id in self.entries:
            if id not in known:
                raise DatastoreError(f"revision id {id!r} not in datastore")


def write_datastore(store: Datastore, path) -> None:
    """Deterministic binary encoding; writing the same store twice is byte-identical."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<IIQ", FORMAT_VERSION, store.dim, len(store.records))
    buf += struct.pack("<I", len(store.labels))
    for name in store.labels.names:
        raw = name.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
    for rec in store.records:
        raw = rec.id.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<I", rec.observed_label)
        buf += np.ascontiguousarray(rec.vector, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DatastoreError(f"{self.path}: truncated file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_datastore(path) -> Datastore:
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise DatastoreError(f"{path}: bad magic, not a datastore file")
    version, dim, count = r.unpack("<IIQ")
    if version != FORMAT_VERSION:
        raise DatastoreError(f"{path}: unsupported format version {version}")
    (n_labels,) = r.unpack("<I")
    names = []
    for _ in range(n_labels):
        (ln,) = r.unpack("<I")
        names.append(r.take(ln).decode("utf-8"))
    labels = LabelSpace(tuple(names))
    records = []
    for _ in range(count):
        (ln,) = r.unpack("<I")
        id = r.take(ln).decode("utf-8")
        (label,) = r.unpack("<I")
        vec = np.frombuffer(r.take(4 * dim), dtype="<f4").astype(np.float32)
        if label >= n_labels:
            raise DatastoreError(f"{path}: record {id!r} label index {label} out of range")
        if not np.all(np.isfinite(vec)):
            raise DatastoreError(f"{path}: record {id!r} has a non-finite component")
        records.append(EmbeddingRecord(id, vec, int(label)))
    if r.pos != len(data):
        raise DatastoreError(f"{path}: trailing bytes after last record")
    return Datastore(dim=dim, records=records, labels=labels)


def make_folds(store: Datastore, n_folds: int, seed: int) -> SplitSpec:
    """Seeded shuffle then round-robin assignment; deterministic for fixed seed."""
    if n_folds <= 0:
        raise DatastoreError("n_folds must be positive")
    if n_folds > len(store):
        raise DatastoreError(f"n_folds {n_folds} exceeds record count {len(store)}")
    rng = np.random.default_rng(np.uint64(seed))
    order = rng.permutation(len(store))
    ids = store.ids
    assignment = {ids[j]: int(pos % n_folds) for pos, j in enumerate(order)}
    return SplitSpec(n_folds=n_folds, assignment=assignment)


def stable_id_seed(seed: int, id: str) -> int:
    """Per-id random stream seed: run seed XOR a stable hash of the id."""
    digest = hashlib.blake2b(id.encode("utf-8"), digest_size=8).digest()
    return int(np.uint64(seed) ^ np.uint64(int.from_bytes(digest, "little")))


@dataclass
class SynthConfig:
    clusters: int = 5
    dim: int = 16
    per_cluster: int = 400
    flip_rate: float = 0.1
    spread: float = 1.0
    seed: int = 7
    center_radius: float = 6.0


def synth_generate(cfg: SynthConfig) -> tuple[Datastore, RevisionFile]:
    """Gaussian clusters with one true label each, plus a seeded label-flip set.

    Exactly floor(flip_rate * N) ids are flipped, sampled without replacement,
    each to a uniformly chosen *different* label. The revision file records the
    true label of every id.
    """
    if not (0.0 <= cfg.flip_rate < 1.0):
        raise DatastoreError("flip rate must be in [0, 1)")
    if cfg.clusters < 2 and cfg.flip_rate > 0:
        raise DatastoreError("flipping labels requires at least 2 clusters")
    if cfg.clusters > cfg.dim:
        raise DatastoreError("need dim >= clusters to place centers on distinct axes")
    rng = np.random.default_rng(np.uint64(cfg.seed))
    labels = LabelSpace(tuple(f"class_{j}" for j in range(cfg.clusters)))
    n = cfg.clusters * cfg.per_cluster
    centers = np.zeros((cfg.clusters, cfg.dim))
    for j in range(cfg.clusters):
        centers[j, j] = cfg.center_radius
    records = []
    true = np.repeat(np.arange(cfg.clusters), cfg.per_cluster)
    points = rng.normal(size=(n, cfg.dim)) * cfg.spread + centers[true]
    for i in range(n):
        records.append(
            EmbeddingRecord(f"ex-{i:05d}", points[i].astype(np.float32), int(true[i]))
        )
    n_flip = int(np.floor(cfg.flip_rate * n))
    flip_idx = rng.choice(n, size=n_flip, replace=False)
    for i in flip_idx:
        offset = rng.integers(1, cfg.clusters)
        records[i].observed_label = int((true[i] + offset) % cfg.clusters)
    store = Datastore(dim=cfg.dim, records=records, labels=labels)
    revisions = RevisionFile({r.id: int(true[i]) for i, r in enumerate(records)})
    return store, revisions


# --- JSONL sidecars ---------------------------------------------------------

def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_revisions(rev: RevisionFile, path) -> None:
    write_jsonl(path, ({"id": i, "revised_label": l} for i, l in rev.entries.items()))


def read_revisions(path) -> RevisionFile:
    return RevisionFile({row["id"]: int(row["revised_label"]) for row in read_jsonl(path)})


def write_metadata(meta: dict[str, ExampleMetadata], path) -> None:
    rows = []
    for id, m in meta.items():
        rows.append(
            {
                "id": id,
                "context": m.context,
                "head_span": list(m.head_span),
                "tail_span": list(m.tail_span),
                "head_type": m.head_type,
                "tail_type": m.tail_type,
            }
        )
    write_jsonl(path, rows)


def read_metadata(path) -> dict[str, ExampleMetadata]:
    out = {}
    for row in read_jsonl(path):
        m = ExampleMetadata(
            context=row["context"],
            head_span=tuple(row["head_span"]),
            tail_span=tuple(row["tail_span"]),
            head_type=row.get("head_type"),
            tail_type=row.get("tail_type"),
        )
        m.validate()
        out[row["id"]] = m
    return out
