"""Uncertain training targets: seeded KNN label replacement and KDE soft labels.

Replacement decisions use one random stream per id (run seed XOR a stable id
hash), so the outcome does not depend on record iteration order and a fixed
seed reproduces the change log exactly. Targets are drawn once per run, not
per epoch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datastore import Datastore, read_jsonl, stable_id_seed, write_jsonl
from .density import DensityModel
from .detector import _plurality
from .neighbor_index import NeighborIndex


class SofteningError(ValueError):
    pass


@dataclass
class SofteningConfig:
    phi: float = 0.3  # tacred-profile default; docred-profile uses 0.15
    seed: int = 0
    k_replace: int = 1
    bandwidth_h: float = 0.25  # docred-profile uses 0.1


@dataclass
class Target:
    kind: str  # hard | soft
    label: Optional[int] = None
    probs: Optional[np.ndarray] = None
    provenance: str = "original"  # original | knn-replaced | kde-soft


@dataclass
class SoftenedDataset:
    targets: dict[str, Target]
    change_log: list[dict] = field(default_factory=list)  # {id, old, new}

    def covers(self, store: Datastore) -> bool:
        return set(self.targets) == set(store.ids)


def hard_targets(store: Datastore) -> SoftenedDataset:
    """Observed labels as-is (the certain-label baseline)."""
    targets = {r.id: Target(kind="hard", label=r.observed_label) for r in store.records}
    return SoftenedDataset(targets=targets)


def knn_replace(store: Datastore, index: NeighborIndex, cfg: SofteningConfig) -> SoftenedDataset:
    if len(store) < 2:
        raise SofteningError("need at least 2 records for a non-self neighbour")
    if not (0.0 <= cfg.phi <= 1.0):
        raise SofteningError("phi must lie in [0, 1]")
    neighbor_lists = index.query_ids(store, store.ids, cfg.k_replace, exclude_self=True)
    targets = {}
    change_log = []
    for rec, nl in zip(store.records, neighbor_lists):
        p_u = np.random.default_rng(np.uint64(stable_id_seed(cfg.seed, rec.id))).random()
        if p_u < cfg.phi:
            new = _plurality([store.by_id(n).observed_label for n in nl.ids])
            targets[rec.id] = Target(kind="hard", label=new, provenance="knn-replaced")
            change_log.append({"id": rec.id, "old": rec.observed_label, "new": new})
        else:
            targets[rec.id] = Target(kind="hard", label=rec.observed_label)
    return SoftenedDataset(targets=targets, change_log=change_log)


def kde_soften(store: Datastore, density: DensityModel) -> SoftenedDataset:
    probs = density.soft_label_batch(store.matrix())
    targets = {
        rec.id: Target(kind="soft", probs=probs[i], provenance="kde-soft")
        for i, rec in enumerate(store.records)
    }
    return SoftenedDataset(targets=targets)


def write_change_log(dataset: SoftenedDataset, path) -> None:
    write_jsonl(path, dataset.change_log)


def write_targets(dataset: SoftenedDataset, path) -> None:
    rows = []
    for id, t in dataset.targets.items():
        row = {"id": id, "kind": t.kind, "provenance": t.provenance}
        if t.kind == "hard":
            row["label"] = t.label
        else:
            row["probs"] = [float(p) for p in t.probs]
        rows.append(row)
    write_jsonl(path, rows)


def read_targets(path) -> SoftenedDataset:
    targets = {}
    for row in read_jsonl(path):
        if row["kind"] == "hard":
            targets[row["id"]] = Target(kind="hard", label=int(row["label"]),
                                        provenance=row["provenance"])
        else:
            targets[row["id"]] = Target(kind="soft",
                                        probs=np.array(row["probs"], dtype=np.float64),
                                        provenance=row["provenance"])
    return SoftenedDataset(targets=targets)
