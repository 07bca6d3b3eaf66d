"""Review service: the triage queue behind the human-in-the-loop workbench.

Holds a mutable copy of the datastore, the detector report, and the latest
corrections. Reviewers work the pending queue in ascending-psi order (most
suspicious first); accepted and relabeled decisions mutate the in-memory
labels, every decision is flushed to an append-only audit log *before* it is
acknowledged, and an explicit recompute rebuilds the index and densities to
refresh psi for the still-pending items. Replaying the audit log over the
original datastore reproduces the current label state exactly.

All mutations are serialised through a single writer lock; the datastore is
otherwise read-only.
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .datastore import (
    Datastore,
    ExampleMetadata,
    read_datastore,
    read_metadata,
    write_datastore,
    write_jsonl,
)
from .density import fit as fit_density
from .detector import credibility_scores, read_report
from .corrector import CorrectionResult, read_corrections
from .neighbor_index import NeighborIndex

PENDING, ACCEPTED, REJECTED, RELABELED = "pending", "accepted", "rejected", "relabeled"
DECIDED = (ACCEPTED, REJECTED, RELABELED)


class NotFound(KeyError):
    pass


class Conflict(ValueError):
    pass


class ServiceError(ValueError):
    pass


@dataclass
class ReviewItem:
    id: str
    observed_label: int
    psi: float
    suggested_label: int
    probs: list[float]
    status: str = PENDING
    decided_label: Optional[int] = None

    def summary(self, labels) -> dict:
        return {
            "id": self.id,
            "observed_label": self.observed_label,
            "observed_name": labels.name(self.observed_label),
            "suggested_label": self.suggested_label,
            "suggested_name": labels.name(self.suggested_label),
            "psi": self.psi,
            "status": self.status,
            "confirm": self.suggested_label == self.observed_label,
        }


def pca_2d(vectors: np.ndarray, seed: int, iters: int = 200) -> np.ndarray:
    """Top-2 principal components by power iteration with deflation.

    Deterministic for a fixed seed; a zero-variance direction yields zero
    coordinates (all-identical points land on the origin)."""
    x = np.asarray(vectors, dtype=np.float64)
    centered = x - x.mean(axis=0)
    n = max(1, x.shape[0] - 1)
    cov = centered.T @ centered / n
    rng = np.random.default_rng(np.uint64(seed))
    components = []
    for _ in range(2):
        v = rng.normal(size=x.shape[1])
        v /= np.linalg.norm(v)
        for _ in range(iters):
            w = cov @ v
            norm = np.linalg.norm(w)
            if norm < 1e-12:
                v = np.zeros_like(v)
                break
            v = w / norm
        if np.any(v):
            lam = float(v @ cov @ v)
            cov = cov - lam * np.outer(v, v)
        components.append(v)
    return centered @ np.stack(components).T


class ReviewService:
    def __init__(
        self,
        store: Datastore,
        report_psi: dict[str, float],
        corrections: CorrectionResult,
        metadata: Optional[dict[str, ExampleMetadata]],
        audit_log_path,
        export_dir=".",
        reviewer: str = "reviewer",
        seed: int = 7,
        k_cred: int = 250,
        bandwidth: float = 0.25,
        neighbor_preview: int = 10,
    ):
        self._lock = threading.Lock()
        self.store = store
        self.original_labels = {r.id: r.observed_label for r in store.records}
        self.metadata = metadata or {}
        self.audit_log_path = Path(audit_log_path)
        self.export_dir = Path(export_dir)
        self.reviewer = reviewer
        self.seed = seed
        self.k_cred = k_cred
        self.bandwidth = bandwidth
        self.neighbor_preview = neighbor_preview
        self._decisions_since_recompute = 0
        self._last_timestamp = 0.0

        self.items: dict[str, ReviewItem] = {}
        for rec in store.records:
            if rec.id not in report_psi:
                continue
            probs = corrections.probs.get(rec.id)
            suggested = corrections.predicted.get(rec.id, rec.observed_label)
            self.items[rec.id] = ReviewItem(
                id=rec.id,
                observed_label=rec.observed_label,
                psi=float(report_psi[rec.id]),
                suggested_label=int(suggested),
                probs=[float(p) for p in probs] if probs is not None else [],
            )
        self._rebuild_geometry()

    @classmethod
    def from_files(cls, store_path, report_path, corrections_path,
                   metadata_path=None, audit_log_path="audit.jsonl",
                   export_dir=".", reviewer="reviewer", seed=7, **kw):
        store = read_datastore(store_path)
        report = read_report(report_path)
        corrections = read_corrections(corrections_path)
        metadata = read_metadata(metadata_path) if metadata_path else None
        psi = dict(zip(report.ids, report.psi))
        return cls(store, psi, corrections, metadata, audit_log_path,
                   export_dir=export_dir, reviewer=reviewer, seed=seed, **kw)

    # -- geometry ------------------------------------------------------------

    def _rebuild_geometry(self):
        self.index = NeighborIndex(self.store)
        self.density = fit_density(self.store, h=self.bandwidth)
        self._projection = pca_2d(self.store.matrix(), seed=self.seed)
        self._row = {id: i for i, id in enumerate(self.store.ids)}

    # -- queue ----------------------------------------------------------------

    def list_queue(self, limit: int = 50, offset: int = 0,
                   status: str = PENDING) -> dict:
        if limit < 0 or offset < 0:
            raise ServiceError("limit and offset must be non-negative")
        if status not in (PENDING,) + DECIDED:
            raise ServiceError(f"unknown status filter {status!r}")
        with self._lock:
            rows = [it for it in self.items.values() if it.status == status]
            rows.sort(key=lambda it: (it.psi, it.id))
            page = rows[offset:offset + limit]
            return {
                "total": len(rows),
                "offset": offset,
                "items": [it.summary(self.store.labels) for it in page],
            }

    def get_item(self, id: str) -> dict:
        with self._lock:
            if id not in self.items:
                raise NotFound(id)
            item = self.items[id]
            rec = self.store.by_id(id)
            k = min(self.neighbor_preview, len(self.index) - 1)
            nl = self.index.query(rec.vector.astype(np.float64), k, exclude_id=id)
            neighbors = [
                {
                    "id": nid,
                    "label": self.store.by_id(nid).observed_label,
                    "label_name": self.store.labels.name(self.store.by_id(nid).observed_label),
                    "distance": dist,
                    "xy": [float(c) for c in self._projection[self._row[nid]]],
                }
                for nid, dist in nl.entries
            ]
            meta = self.metadata.get(id)
            payload = item.summary(self.store.labels)
            payload.update(
                {
                    "context": meta.context if meta else None,
                    "head_span": list(meta.head_span) if meta else None,
                    "tail_span": list(meta.tail_span) if meta else None,
                    "probs": item.probs,
                    "neighbors": neighbors,
                    "xy": [float(c) for c in self._projection[self._row[id]]],
                    "decided_label": item.decided_label,
                }
            )
            return payload

    # -- decisions ------------------------------------------------------------

    def post_decision(self, id: str, action: str,
                      label: Optional[int | str] = None) -> dict:
        with self._lock:
            if id not in self.items:
                raise NotFound(id)
            item = self.items[id]
            if item.status != PENDING:
                raise Conflict(f"item {id} already decided ({item.status})")
            if action == "accept-suggestion":
                new_label, new_status = item.suggested_label, ACCEPTED
            elif action == "reject":
                new_label, new_status = None, REJECTED
            elif action == "relabel":
                if label is None:
                    raise ServiceError("relabel requires a label")
                if isinstance(label, str):
                    try:
                        label = self.store.labels.index(label)
                    except KeyError:
                        raise ServiceError(f"unknown label {label!r}")
                if not (0 <= int(label) < len(self.store.labels)):
                    raise ServiceError(f"label index {label} out of range")
                new_label, new_status = int(label), RELABELED
            else:
                raise ServiceError(f"unknown action {action!r}")

            # the decision is durable before it is acknowledged
            self._append_audit(id, action, new_label)
            if new_label is not None:
                self.store.by_id(id).observed_label = new_label
                item.decided_label = new_label
            item.status = new_status
            self._decisions_since_recompute += 1
            return item.summary(self.store.labels)

    def _append_audit(self, id: str, action: str, new_label: Optional[int]):
        ts = time.time()
        if ts <= self._last_timestamp:
            ts = self._last_timestamp + 1e-6
        self._last_timestamp = ts
        record = {
            "id": id,
            "action": action,
            "new_label": new_label,
            "timestamp": ts,
            "reviewer": self.reviewer,
        }
        with open(self.audit_log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- recompute --------------------------------------------------------------

    def recompute(self) -> int:
        """Rebuild index/density over the current labels and refresh psi for
        pending items; decided items keep their stored psi. Returns how many
        pending psi values changed. No decisions since the last recompute is
        a no-op."""
        with self._lock:
            if self._decisions_since_recompute == 0:
                return 0
            self._rebuild_geometry()
            pending = sorted(id for id, it in self.items.items()
                             if it.status == PENDING)
            changed = 0
            if pending:
                k = min(self.k_cred, len(self.index) - 1)
                report = credibility_scores(self.index, self.density, self.store,
                                            pending, k)
                for id, psi in zip(report.ids, report.psi):
                    if self.items[id].psi != float(psi):
                        changed += 1
                    self.items[id].psi = float(psi)
            self._decisions_since_recompute = 0
            return changed

    # -- projection & export -----------------------------------------------------

    def projection_2d(self, sample: int, seed: int) -> dict[str, tuple[float, float]]:
        with self._lock:
            n = len(self.store)
            if sample < 2:
                raise ServiceError("sample must be at least 2")
            if sample > n:
                raise ServiceError(f"sample {sample} exceeds store size {n}")
            rng = np.random.default_rng(np.uint64(seed))
            pick = sorted(rng.choice(n, size=sample, replace=False).tolist())
            ids = self.store.ids
            return {ids[i]: (float(self._projection[i, 0]),
                             float(self._projection[i, 1])) for i in pick}

    def export(self) -> dict:
        with self._lock:
            self.export_dir.mkdir(parents=True, exist_ok=True)
            store_path = self.export_dir / "corrected.rann"
            log_path = self.export_dir / "export_changes.jsonl"
            write_datastore(self.store, store_path)
            changes = [
                {"id": id, "old": old, "new": self.store.by_id(id).observed_label}
                for id, old in self.original_labels.items()
                if self.store.by_id(id).observed_label != old
            ]
            write_jsonl(log_path, changes)
            return {"datastore": str(store_path), "change_log": str(log_path),
                    "changes": len(changes)}


def replay_audit(original: Datastore, audit_log_path) -> dict[str, int]:
    """Label state reached by applying the audit log over the original store."""
    labels = {r.id: r.observed_label for r in original.records}
    path = Path(audit_log_path)
    if not path.exists():
        return labels
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        if record["new_label"] is not None:
            labels[record["id"]] = int(record["new_label"])
    return labels


def create_app(service: ReviewService):
    """FastAPI app over a ReviewService; payloads are plain dicts."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse

    app = FastAPI(title="reanno review service")

    @app.get("/queue")
    def queue(limit: int = 50, offset: int = 0, status: str = PENDING):
        try:
            return service.list_queue(limit=limit, offset=offset, status=status)
        except ServiceError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/item/{item_id}")
    def item(item_id: str):
        try:
            return service.get_item(item_id)
        except NotFound:
            return JSONResponse(status_code=404,
                                content={"error": "not-found", "id": item_id})

    @app.post("/item/{item_id}/decision")
    def decision(item_id: str, body: dict):
        try:
            return service.post_decision(item_id, body.get("action"),
                                         body.get("label"))
        except NotFound:
            return JSONResponse(status_code=404,
                                content={"error": "not-found", "id": item_id})
        except Conflict as exc:
            return JSONResponse(status_code=409,
                                content={"error": "conflict", "detail": str(exc)})
        except ServiceError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/recompute")
    def recompute():
        return {"changed": service.recompute()}

    @app.get("/projection")
    def projection(sample: int = 500, seed: int = 7):
        try:
            sample = min(sample, len(service.store))
            coords = service.projection_2d(sample, seed)
            return {"points": {id: list(xy) for id, xy in coords.items()}}
        except ServiceError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/export")
    def export():
        return service.export()

    return app
