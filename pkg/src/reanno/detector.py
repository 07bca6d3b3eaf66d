"""Annotation inconsistency detection.

Two detectors over the neighbour geometry: majority vote among the k nearest,
and the credibility score — density-weighted, distance-discounted evidence
from same-label neighbours, aggregated in log space and min-max rescaled over
the scoring cohort. A threshold on the rescaled score yields the verdict.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .datastore import Datastore, RevisionFile, read_jsonl, write_jsonl
from .density import DensityModel
from .metrics import RankMetrics, rank_metrics
from .neighbor_index import NeighborIndex, NeighborList

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"


class DetectorError(ValueError):
    pass


@dataclass
class DetectorConfig:
    mode: str = "credibility"  # vote | credibility
    k_vote: int = 3
    k_cred: int = 250
    beta: float = 0.5
    bandwidth_h: float = 0.25
    positive_class: str = INCONSISTENT


@dataclass
class CredibilityReport:
    ids: list[str]
    log_s: np.ndarray  # -inf when no same-label neighbour contributed
    psi: np.ndarray  # in [0, 1]
    verdicts: Optional[list[str]] = None

    def as_rows(self) -> list[dict]:
        rows = []
        for i, id in enumerate(self.ids):
            rows.append(
                {
                    "id": id,
                    "psi": float(self.psi[i]),
                    "verdict": None if self.verdicts is None else self.verdicts[i],
                }
            )
        return rows


def write_report(report: CredibilityReport, path) -> None:
    write_jsonl(path, report.as_rows())


def read_report(path) -> CredibilityReport:
    rows = read_jsonl(path)
    ids = [r["id"] for r in rows]
    psi = np.array([r["psi"] for r in rows], dtype=np.float64)
    verdicts = [r.get("verdict") for r in rows]
    if any(v is None for v in verdicts):
        verdicts = None
    return CredibilityReport(ids=ids, log_s=np.full(len(ids), np.nan), psi=psi,
                             verdicts=verdicts)


def _plurality(labels: Sequence[int]) -> int:
    """Winning label among neighbour labels in rank order; ties go to the
    tied label whose nearest representative is closest (lowest first rank)."""
    counts: dict[int, int] = {}
    first_rank: dict[int, int] = {}
    for rank, lab in enumerate(labels):
        counts[lab] = counts.get(lab, 0) + 1
        first_rank.setdefault(lab, rank)
    best = max(counts.values())
    tied = [lab for lab, c in counts.items() if c == best]
    return min(tied, key=lambda lab: first_rank[lab])


def vote_detect(
    index: NeighborIndex,
    store: Datastore,
    query_ids: Sequence[str],
    k: int,
    exclude_self: bool = True,
) -> dict[str, str]:
    if k < 1:
        raise DetectorError("k must be at least 1")
    neighbor_lists = index.query_ids(store, query_ids, k, exclude_self=exclude_self)
    verdicts = {}
    for id, nl in zip(query_ids, neighbor_lists):
        labels = [store.by_id(n).observed_label for n in nl.ids]
        winner = _plurality(labels)
        observed = store.by_id(id).observed_label
        verdicts[id] = CONSISTENT if winner == observed else INCONSISTENT
    return verdicts


def credibility_from_neighbors(
    neighbor_lists: Sequence[NeighborList],
    density: DensityModel,
    store: Datastore,
    query_ids: Sequence[str],
) -> CredibilityReport:
    """Score a cohort from precomputed neighbour lists.

    Per query i with observed label r_i: distances are normalised by the max
    over that query's retrieved set, each same-label neighbour contributes
    log f_{r_i}(e_n) - d_n, and log s_i is their log-sum-exp. psi is the
    min-max over the cohort of exp(log s_i - max_j log s_j); a cohort where
    every s is equal scores psi = 1 everywhere (no relative evidence).
    """
    if len(query_ids) == 0:
        raise DetectorError("empty query set")
    # neighbour log-densities are query-independent: compute once per member
    member_ids = sorted({n for nl in neighbor_lists for n in nl.ids})
    member_row = {id: i for i, id in enumerate(member_ids)}
    member_mat = np.stack([store.by_id(i).vector for i in member_ids]).astype(np.float64)
    log_dens = density.log_density_matrix(member_mat)  # (M, |R|)

    log_s = np.empty(len(query_ids))
    for qi, (id, nl) in enumerate(zip(query_ids, neighbor_lists)):
        observed = store.by_id(id).observed_label
        dists = nl.distances
        dmax = dists.max() if len(dists) else 0.0
        d_norm = dists / dmax if dmax > 0 else np.zeros_like(dists)
        terms = []
        for rank, nid in enumerate(nl.ids):
            if store.by_id(nid).observed_label == observed:
                terms.append(log_dens[member_row[nid], observed] - d_norm[rank])
        if terms:
            terms = np.asarray(terms, dtype=np.float64)
            m = terms.max()
            log_s[qi] = m + np.log(np.sum(np.exp(terms - m))) if np.isfinite(m) else -np.inf
        else:
            log_s[qi] = -np.inf
    psi = _min_max_psi(log_s)
    return CredibilityReport(ids=list(query_ids), log_s=log_s, psi=psi)


def _min_max_psi(log_s: np.ndarray) -> np.ndarray:
    finite = np.isfinite(log_s)
    if not finite.any():
        return np.ones_like(log_s)
    m = log_s[finite].max()
    u = np.exp(log_s - m)  # exp(-inf) -> 0
    umin, umax = u.min(), u.max()
    if umax == umin:
        return np.ones_like(u)
    return (u - umin) / (umax - umin)


def credibility_scores(
    index: NeighborIndex,
    density: DensityModel,
    store: Datastore,
    query_ids: Sequence[str],
    k_cred: int,
    exclude_self: bool = True,
    threads: int = 1,
) -> CredibilityReport:
    if len(query_ids) == 0:
        raise DetectorError("empty query set")
    if k_cred > len(index) - (1 if exclude_self else 0):
        raise DetectorError(f"k_cred={k_cred} exceeds index size")
    if threads > 1 and len(query_ids) > 1:
        chunks = np.array_split(np.arange(len(query_ids)), threads)
        lists: list[Optional[NeighborList]] = [None] * len(query_ids)

        def run(chunk):
            ids = [query_ids[i] for i in chunk]
            return chunk, index.query_ids(store, ids, k_cred, exclude_self=exclude_self)

        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            for chunk, res in pool.map(run, [c for c in chunks if len(c)]):
                for i, nl in zip(chunk, res):
                    lists[i] = nl
        neighbor_lists = lists
    else:
        neighbor_lists = index.query_ids(store, query_ids, k_cred, exclude_self=exclude_self)
    return credibility_from_neighbors(neighbor_lists, density, store, query_ids)


def classify_threshold(report: CredibilityReport, beta: float) -> CredibilityReport:
    if not (0.0 <= beta <= 1.0):
        raise DetectorError("beta must lie in [0, 1]")
    verdicts = [CONSISTENT if p >= beta else INCONSISTENT for p in report.psi]
    return CredibilityReport(ids=report.ids, log_s=report.log_s, psi=report.psi,
                             verdicts=verdicts)


def rank_eval(
    index: NeighborIndex,
    store: Datastore,
    revisions: RevisionFile,
    k_list: Sequence[int] = (1, 5, 10),
    exclude_self: bool = True,
) -> RankMetrics:
    """Rank of the first neighbour whose observed label equals the revised label."""
    if not revisions.entries:
        raise DetectorError("empty revisions")
    revisions.validate_over(store)
    ids = list(revisions.entries)
    depth = min(max(k_list), len(index) - (1 if exclude_self else 0))
    neighbor_lists = index.query_ids(store, ids, depth, exclude_self=exclude_self)
    ranks: list[Optional[int]] = []
    for id, nl in zip(ids, neighbor_lists):
        true_label = revisions.entries[id]
        rank = None
        for pos, nid in enumerate(nl.ids, start=1):
            if store.by_id(nid).observed_label == true_label:
                rank = pos
                break
        ranks.append(rank)
    return rank_metrics(ranks, k_list=k_list)
