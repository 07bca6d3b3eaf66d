"""Exact k-nearest-neighbour search with squared Euclidean distance.

Brute force over the datastore matrix (desk scales stay well under 1e5 x 768,
where exact search is both tractable and testable). Distances accumulate in
64-bit, dimension-major; ties break by ascending id.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .datastore import Datastore


class NeighborIndexError(ValueError):
    pass


@dataclass
class NeighborList:
    query_id: Optional[str]
    entries: list[tuple[str, float]]  # ascending (distance, id)

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    @property
    def distances(self) -> np.ndarray:
        return np.array([d for _, d in self.entries], dtype=np.float64)


class NeighborIndex:
    def __init__(self, store: Datastore):
        if len(store) == 0:
            raise NeighborIndexError("cannot build an index over an empty store")
        self.dim = store.dim
        self._ids = list(store.ids)
        self._row = {id: i for i, id in enumerate(self._ids)}
        self._matrix = store.matrix(dtype=np.float64)
        # column-aligned tie-break key: rank of each id in ascending id order
        order = sorted(range(len(self._ids)), key=lambda i: self._ids[i])
        self._id_rank = np.empty(len(self._ids), dtype=np.int64)
        for rank, i in enumerate(order):
            self._id_rank[i] = rank

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def vector(self, id: str) -> np.ndarray:
        return self._matrix[self._row[id]]

    def refresh(self, updates: Mapping[str, np.ndarray]) -> None:
        """Replace stored vectors in place; untouched ids keep their answers."""
        for id, vec in updates.items():
            if id not in self._row:
                raise NeighborIndexError(f"refresh of unknown id {id!r}")
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.dim,):
                raise NeighborIndexError(f"refresh vector for {id!r} has wrong length")
            self._matrix[self._row[id]] = vec

    def _rank_rows(self, dists: np.ndarray) -> np.ndarray:
        """Per-row column order sorted by (distance, id)."""
        out = np.empty(dists.shape, dtype=np.int64)
        for r in range(dists.shape[0]):
            out[r] = np.lexsort((self._id_rank, dists[r]))
        return out

    def query(self, vector: np.ndarray, k: int, exclude_id: Optional[str] = None) -> NeighborList:
        return self.query_batch(np.asarray(vector, dtype=np.float64)[None, :], k,
                                exclude_ids=[exclude_id], query_ids=[exclude_id])[0]

    def query_batch(
        self,
        vectors: np.ndarray,
        k: int,
        exclude_ids: Optional[Sequence[Optional[str]]] = None,
        query_ids: Optional[Sequence[Optional[str]]] = None,
    ) -> list[NeighborList]:
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise NeighborIndexError(f"query dim {vectors.shape[-1]} != index dim {self.dim}")
        q = vectors.shape[0]
        if exclude_ids is None:
            exclude_ids = [None] * q
        if query_ids is None:
            query_ids = [None] * q
        if k <= 0:
            raise NeighborIndexError("k must be positive")
        dists = _kernels.sqdist(vectors, self._matrix)
        order = self._rank_rows(dists)
        results = []
        for r in range(q):
            avail = len(self._ids) - (1 if exclude_ids[r] in self._row else 0)
            if k > avail:
                raise NeighborIndexError(f"k={k} exceeds available neighbours ({avail})")
            entries = []
            for col in order[r]:
                id = self._ids[col]
                if exclude_ids[r] is not None and id == exclude_ids[r]:
                    continue
                entries.append((id, float(dists[r, col])))
                if len(entries) == k:
                    break
            results.append(NeighborList(query_id=query_ids[r], entries=entries))
        return results

    def query_ids(self, store: Datastore, ids: Sequence[str], k: int,
                  exclude_self: bool = True) -> list[NeighborList]:
        """Neighbours of stored examples; self-exclusion on by default."""
        vecs = np.stack([store.by_id(i).vector for i in ids]).astype(np.float64)
        excl = list(ids) if exclude_self else [None] * len(ids)
        return self.query_batch(vecs, k, exclude_ids=excl, query_ids=list(ids))


def build(store: Datastore) -> NeighborIndex:
    return NeighborIndex(store)
