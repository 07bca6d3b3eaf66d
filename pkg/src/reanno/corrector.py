"""Annotation error correction: cross-validated relabeling.

A classifier head (hidden ReLU layer + softmax) is trained fold-by-fold on
observed or softened targets and predicts corrected labels for the held-out
fold; merging the held-out predictions covers every id exactly once. Two
neighbour-aware variants: a rank-aware encoder that contextualises the query
with its nearest keybase members, and distant-peer contrastive learning that
injects high peer-distance neighbours as extra positives.

Per fold, the keybase, the peer-selection density, and every gradient batch
are restricted to that fold's gradient set, so the no-leakage audit
(`trained_ids_by_fold`) is exact: parameters predicting fold f were never
updated on any example of fold f.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .datastore import Datastore, make_folds, read_jsonl, write_jsonl
from .density import DensityModel
from .neighbor_index import NeighborIndex, NeighborList
from .neuralnet import (
    AdamW,
    Tensor,
    save_params,
    sincos_positions,
    softmax_xent,
    warmup_constant_lr,
    zero_grads,
)
from .neuralnet import autodiff as ad
from .neuralnet.layers import encoder_stack, init_encoder_params, init_linear
from .softening import SoftenedDataset


class CorrectorError(ValueError):
    pass


@dataclass
class NeighborEncoderConfig:
    layers: int = 2  # paper reference runs used 6
    heads: int = 8
    k_context: int = 10
    dropout: float = 0.1
    embedding_mode: str = "static"


@dataclass
class ContrastiveConfig:
    tau: float = 0.1
    mu: float = 0.35  # docred-profile uses 0.02
    n_retrieved: int = 100
    n_peers: int = 5
    projection_dim: int = 189
    denominator_mode: str = "standard"  # standard | literal
    embedding_mode: str = "dynamic"

    def __post_init__(self):
        if self.n_peers > self.n_retrieved:
            raise CorrectorError("n_peers cannot exceed n_retrieved")
        if self.tau <= 0:
            raise CorrectorError("temperature must be positive")
        if self.denominator_mode not in ("standard", "literal"):
            raise CorrectorError(f"unknown denominator mode {self.denominator_mode!r}")


@dataclass
class TrainConfig:
    n_folds: int = 4
    epochs_per_fold: int = 5
    lr: float = 5e-4
    dropout: float = 0.2
    warmup_ratio: float = 0.1
    batch_size: int = 64
    seed: int = 0
    val_fraction: float = 0.1  # train-fold slice held out for epoch selection


@dataclass
class CorrectionResult:
    predicted: dict[str, int]
    probs: dict[str, np.ndarray]
    fold_of: dict[str, int]
    trained_ids_by_fold: dict[int, set[str]] = field(default_factory=dict)


# --- classifier head ---------------------------------------------------------

def init_classifier_params(
    rng: np.random.Generator, d: int, n_labels: int, proj_bias: bool = True
) -> dict[str, Tensor]:
    params = {
        "cls.w_proj": Tensor(init_linear(rng, d, d)),
        "cls.w_out": Tensor(init_linear(rng, d, n_labels)),
        "cls.b_out": Tensor(np.zeros(n_labels)),
    }
    if proj_bias:
        params["cls.b_proj"] = Tensor(np.zeros(d))
    return params


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def classifier_hidden_np(params: dict[str, Tensor], x: np.ndarray) -> np.ndarray:
    """ReLU hidden state of the head, numpy fast path (inference/refresh)."""
    pre = x @ params["cls.w_proj"].data
    if "cls.b_proj" in params:
        pre = pre + params["cls.b_proj"].data
    return np.maximum(pre, 0.0)


def classify_head(params: dict[str, Tensor], e: np.ndarray) -> np.ndarray:
    """Probability vector(s) for embedding row(s), dropout off."""
    e = np.asarray(e, dtype=np.float64)
    squeeze = e.ndim == 1
    x = e[None, :] if squeeze else e
    if x.shape[1] != params["cls.w_proj"].data.shape[0]:
        raise CorrectorError("embedding dimension does not match the head")
    h = classifier_hidden_np(params, x)
    probs = _softmax_np(h @ params["cls.w_out"].data + params["cls.b_out"].data)
    return probs[0] if squeeze else probs


def classifier_hidden_graph(params: dict[str, Tensor], x: Tensor) -> Tensor:
    pre = ad.matmul(x, params["cls.w_proj"])
    if "cls.b_proj" in params:
        pre = ad.add(pre, params["cls.b_proj"])
    return ad.relu(pre)


def _logits_from_hidden(
    params: dict[str, Tensor],
    h: Tensor,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    h = ad.dropout(h, dropout_rate, rng)
    return ad.add(ad.matmul(h, params["cls.w_out"]), params["cls.b_out"])


def classifier_logits_graph(
    params: dict[str, Tensor],
    x: Tensor,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    return _logits_from_hidden(params, classifier_hidden_graph(params, x),
                               dropout_rate, rng)


# --- rank-aware neighbour encoder --------------------------------------------

def encode_with_neighbors(
    params: dict[str, Tensor],
    cfg: NeighborEncoderConfig,
    e_q: np.ndarray,
    neighbor_vectors: np.ndarray,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Contextualised query embedding: first output row of the encoder over
    [query; neighbours in rank order] with sinusoidal positions added.
    Neighbour vectors enter as constants; no gradient reaches the keybase."""
    e_q = np.asarray(e_q, dtype=np.float64)
    neighbor_vectors = np.asarray(neighbor_vectors, dtype=np.float64).reshape(-1, e_q.shape[0])
    if neighbor_vectors.shape[0] > cfg.k_context:
        raise CorrectorError(f"more than k_context={cfg.k_context} neighbours supplied")
    seq = np.vstack([e_q[None, :], neighbor_vectors])
    seq = seq + sincos_positions(seq.shape[0], seq.shape[1])
    out = encoder_stack(Tensor(seq), cfg.heads, cfg.layers, params,
                        dropout_rate=dropout_rate, rng=rng)
    return out[0]


# --- distant peers -----------------------------------------------------------

def peer_distance(soft_labels: np.ndarray, distances: np.ndarray) -> np.ndarray:
    """lambda = L L^T log(D) with distances clamped to >= 1e-12 before the log."""
    d = np.maximum(np.asarray(distances, dtype=np.float64), 1e-12)
    big_l = np.asarray(soft_labels, dtype=np.float64)
    return big_l @ (big_l.T @ np.log(d))


def select_distant_peers(
    neighbors: NeighborList,
    neighbor_soft_labels: np.ndarray,
    n_peers: int,
) -> list[tuple[str, float]]:
    """The n_peers neighbour ids with the largest peer distance, ties by
    ascending id; invariant to the order neighbours are presented in."""
    if len(neighbors.entries) < n_peers:
        raise CorrectorError(f"need at least n_peers={n_peers} neighbours")
    lam = peer_distance(neighbor_soft_labels, neighbors.distances)
    ranked = sorted(zip(neighbors.ids, lam), key=lambda t: (-t[1], t[0]))
    return [(id, float(l)) for id, l in ranked[:n_peers]]


# --- contrastive loss --------------------------------------------------------

def _logsumexp_graph(x: Tensor) -> Tensor:
    c = float(x.data.max())
    return ad.add(ad.log(ad.sum_(ad.exp(ad.add(x, -c)))), c)


def contrastive_loss(
    z: Tensor,
    labels: np.ndarray,
    peer_z: Sequence[Optional[Tensor]],
    tau: float,
    mode: str = "standard",
) -> Tensor:
    """Supervised contrastive loss with injected peers.

    P(i) = same-label batch members plus anchor i's injected peers; N(i) =
    different-label batch members. The standard denominator sums exp
    similarities over P(i) u N(i); literal mode restricts it to N(i) (which
    permits negative loss). Anchors with empty P(i), or an empty denominator,
    are skipped; the result is the mean over contributing anchors (an exact
    zero constant when none contribute).
    """
    if tau <= 0:
        raise CorrectorError("temperature must be positive")
    if mode not in ("standard", "literal"):
        raise CorrectorError(f"unknown denominator mode {mode!r}")
    norms = np.linalg.norm(z.data, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise CorrectorError("projection rows must be L2-normalised")
    labels = np.asarray(labels)
    b = z.data.shape[0]
    anchor_losses: list[Tensor] = []
    sims = ad.mul(ad.matmul(z, ad.transpose(z)), 1.0 / tau)
    for i in range(b):
        pos_idx = np.array([j for j in range(b) if j != i and labels[j] == labels[i]])
        neg_idx = np.array([j for j in range(b) if labels[j] != labels[i]])
        row = sims[i]
        parts: list[Tensor] = []
        if pos_idx.size:
            parts.append(row[pos_idx])
        peers = peer_z[i] if peer_z is not None else None
        if peers is not None and peers.data.shape[0]:
            parts.append(ad.mul(ad.matmul(peers, z[i]), 1.0 / tau))
        if not parts:
            continue  # empty P(i)
        pos_sims = ad.concat(parts, axis=0) if len(parts) > 1 else parts[0]
        if mode == "standard":
            denom_terms = [pos_sims]
            if neg_idx.size:
                denom_terms.append(row[neg_idx])
            log_denom = _logsumexp_graph(ad.concat(denom_terms, axis=0)
                                         if len(denom_terms) > 1 else denom_terms[0])
        else:
            if not neg_idx.size:
                continue  # empty denominator
            log_denom = _logsumexp_graph(row[neg_idx])
        n_pos = pos_sims.data.shape[0]
        loss_i = ad.mul(ad.sum_(ad.add(ad.mul(pos_sims, -1.0), log_denom)), 1.0 / n_pos)
        anchor_losses.append(loss_i)
    if not anchor_losses:
        return Tensor(0.0)
    total = anchor_losses[0]
    for extra in anchor_losses[1:]:
        total = ad.add(total, extra)
    return ad.mul(total, 1.0 / len(anchor_losses))


def init_projection_params(
    rng: np.random.Generator, d: int, projection_dim: int
) -> dict[str, Tensor]:
    # b2 starts small-but-nonzero: a dead relu row would otherwise emit an
    # exactly-zero vector, which cannot be L2-normalised
    return {
        "proj.w1": Tensor(init_linear(rng, d, d)),
        "proj.b1": Tensor(np.zeros(d)),
        "proj.w2": Tensor(init_linear(rng, d, projection_dim)),
        "proj.b2": Tensor(rng.uniform(-0.05, 0.05, size=projection_dim)),
    }


def projection_graph(params: dict[str, Tensor], x: Tensor) -> Tensor:
    h = ad.relu(ad.add(ad.matmul(x, params["proj.w1"]), params["proj.b1"]))
    out = ad.add(ad.matmul(h, params["proj.w2"]), params["proj.b2"])
    return ad.l2_normalize(out, axis=-1)


# --- cross-validated training --------------------------------------------------

def _target_arrays(store: Datastore, targets: SoftenedDataset | None):
    """Per-id CE targets: int label or distribution row."""
    n_labels = len(store.labels)
    if targets is None:
        return {r.id: ("hard", r.observed_label) for r in store.records}
    if not targets.covers(store):
        raise CorrectorError("targets do not cover every id in the store")
    out = {}
    for id, t in targets.targets.items():
        if t.kind == "hard":
            out[id] = ("hard", int(t.label))
        else:
            if t.probs.shape != (n_labels,):
                raise CorrectorError(f"soft target for {id!r} has wrong length")
            out[id] = ("soft", np.asarray(t.probs, dtype=np.float64))
    return out


def _batch_targets(entries) -> np.ndarray:
    if all(kind == "hard" for kind, _ in entries):
        return np.array([v for _, v in entries], dtype=np.int64)
    n = len(entries)
    k = next(len(v) for kind, v in entries if kind == "soft")
    rows = np.zeros((n, k))
    for r, (kind, v) in enumerate(entries):
        if kind == "hard":
            rows[r, v] = 1.0
        else:
            rows[r] = v
    return rows


class _PeerState:
    """Per-epoch neighbour context for contrastive training."""

    def __init__(self, ids: list[str], peers: dict[str, list[str]]):
        self.ids = ids
        self.peers = peers


def _compute_peers(
    keybase: NeighborIndex,
    keybase_store_labels: dict[str, int],
    n_labels: int,
    cfg: ContrastiveConfig,
    bandwidth: float,
) -> dict[str, list[str]]:
    """Distant peers for every keybase member, in the index's current space."""
    ids = keybase.ids
    mat = np.stack([keybase.vector(id) for id in ids])
    labels = np.array([keybase_store_labels[id] for id in ids])
    members = [mat[labels == cls] for cls in range(n_labels)]
    density = DensityModel(members, h=bandwidth, dim=mat.shape[1])
    soft = density.soft_label_batch(mat)
    soft_by_id = {id: soft[i] for i, id in enumerate(ids)}
    n_ret = min(cfg.n_retrieved, len(ids) - 1)
    lists = keybase.query_batch(mat, n_ret, exclude_ids=ids, query_ids=ids)
    peers = {}
    for id, nl in zip(ids, lists):
        mat_soft = np.stack([soft_by_id[n] for n in nl.ids])
        peers[id] = [pid for pid, _ in
                     select_distant_peers(nl, mat_soft, min(cfg.n_peers, n_ret))]
    return peers


def train_crossval(
    store: Datastore,
    targets: Optional[SoftenedDataset],
    train_cfg: TrainConfig,
    contrastive_cfg: Optional[ContrastiveConfig] = None,
    encoder_cfg: Optional[NeighborEncoderConfig] = None,
    bandwidth: float = 0.25,
    checkpoint_dir=None,
    proj_bias: bool = True,
) -> CorrectionResult:
    """Train per fold on the other folds, predict the held-out fold, merge.

    Every fold re-initialises all parameters from the seeded initialiser.
    Dynamic embedding mode refreshes the keybase at the end of each epoch
    with the classifier hidden states of the original vectors; static mode
    never refreshes. The epoch with the best macro F1 against observed labels
    on an internal validation slice supplies the fold's predictions.
    """
    if encoder_cfg is not None and contrastive_cfg is not None \
            and contrastive_cfg.embedding_mode == "dynamic":
        raise CorrectorError("the neighbour encoder forces static embeddings; "
                             "dynamic contrastive mode contradicts it")
    if encoder_cfg is not None and encoder_cfg.embedding_mode != "static":
        raise CorrectorError("the neighbour encoder forces static embeddings")

    target_map = _target_arrays(store, targets)
    spec = make_folds(store, train_cfg.n_folds, train_cfg.seed)
    spec.validate_over(store)
    n_labels = len(store.labels)
    observed = {r.id: r.observed_label for r in store.records}
    dim = store.dim

    predicted: dict[str, int] = {}
    probs: dict[str, np.ndarray] = {}
    fold_of: dict[str, int] = {}
    trained_ids_by_fold: dict[int, set[str]] = {}

    for fold in range(train_cfg.n_folds):
        held_out = sorted(spec.fold_ids(fold))
        train_ids = sorted(id for id in store.ids if spec.assignment[id] != fold)
        rng_init = np.random.default_rng([train_cfg.seed, fold, 0])
        rng_batch = np.random.default_rng([train_cfg.seed, fold, 1])
        rng_drop = np.random.default_rng([train_cfg.seed, fold, 2])
        rng_val = np.random.default_rng([train_cfg.seed, fold, 3])

        n_val = max(1, int(round(train_cfg.val_fraction * len(train_ids))))
        val_pick = rng_val.choice(len(train_ids), size=n_val, replace=False)
        val_ids = sorted(train_ids[i] for i in val_pick)
        grad_ids = sorted(set(train_ids) - set(val_ids))

        params = init_classifier_params(rng_init, dim, n_labels, proj_bias=proj_bias)
        if encoder_cfg is not None:
            params.update(init_encoder_params(rng_init, dim, encoder_cfg.layers))
        if contrastive_cfg is not None:
            params.update(init_projection_params(rng_init, dim,
                                                 contrastive_cfg.projection_dim))
        opt = AdamW(lr=train_cfg.lr)
        opt.init_state(params)

        grad_store = store.subset(grad_ids)
        keybase = NeighborIndex(grad_store) if (encoder_cfg or contrastive_cfg) else None
        dynamic = contrastive_cfg is not None and contrastive_cfg.embedding_mode == "dynamic"
        peers_by_id: dict[str, list[str]] = {}
        if contrastive_cfg is not None:
            peers_by_id = _compute_peers(keybase, observed, n_labels,
                                         contrastive_cfg, bandwidth)

        steps_per_epoch = int(np.ceil(len(grad_ids) / train_cfg.batch_size))
        total_steps = steps_per_epoch * train_cfg.epochs_per_fold
        step = 0
        best = (-1.0, None)  # (val macro F1, param snapshot)
        trained: set[str] = set()

        for epoch in range(train_cfg.epochs_per_fold):
            order = rng_batch.permutation(len(grad_ids))
            for start in range(0, len(grad_ids), train_cfg.batch_size):
                batch_ids = [grad_ids[i] for i in order[start:start + train_cfg.batch_size]]
                trained.update(batch_ids)
                x_np = np.stack([store.by_id(i).vector for i in batch_ids]).astype(np.float64)
                if encoder_cfg is not None:
                    rows = []
                    ctx = keybase.query_batch(
                        x_np, min(encoder_cfg.k_context, len(keybase) - 1),
                        exclude_ids=batch_ids, query_ids=batch_ids)
                    for r, nl in enumerate(ctx):
                        nb = np.stack([keybase.vector(n) for n in nl.ids])
                        rows.append(encode_with_neighbors(
                            params, encoder_cfg, x_np[r], nb,
                            dropout_rate=encoder_cfg.dropout, rng=rng_drop))
                    x = ad.concat([ad.reshape(r, (1, dim)) for r in rows], axis=0)
                else:
                    x = Tensor(x_np)
                hidden = classifier_hidden_graph(params, x)
                logits = _logits_from_hidden(params, hidden, train_cfg.dropout, rng_drop)
                batch_targets = _batch_targets([target_map[i] for i in batch_ids])
                loss = softmax_xent(logits, batch_targets)
                if contrastive_cfg is not None and contrastive_cfg.mu != 0.0:
                    # the projection head reads the shared hidden state, so the
                    # contrastive gradient shapes the representation the
                    # classifier consumes (the trainable analogue of the
                    # fine-tuned encoder the loss is meant to steer)
                    z = projection_graph(params, hidden)
                    peer_lists = []
                    for id in batch_ids:
                        pids = peers_by_id[id]
                        trained.update(pids)
                        pe = np.stack([store.by_id(p).vector for p in pids]).astype(np.float64)
                        peer_h = classifier_hidden_graph(params, Tensor(pe))
                        peer_lists.append(projection_graph(params, peer_h))
                    ncl = contrastive_loss(z, np.array([observed[i] for i in batch_ids]),
                                           peer_lists, contrastive_cfg.tau,
                                           contrastive_cfg.denominator_mode)
                    loss = ad.add(loss, ad.mul(ncl, contrastive_cfg.mu))
                zero_grads(params)
                loss.backward()
                opt.step(params, lr_scale=warmup_constant_lr(
                    step, total_steps, train_cfg.warmup_ratio))
                step += 1

            val_pred = _predict(params, store, val_ids, encoder_cfg, keybase)
            f1 = _macro_f1({id: int(np.argmax(val_pred[id])) for id in val_ids},
                           {id: observed[id] for id in val_ids})
            if f1 > best[0]:
                best = (f1, {k: np.array(v.data, copy=True) for k, v in params.items()})

            if dynamic and epoch + 1 < train_cfg.epochs_per_fold:
                originals = np.stack([store.by_id(i).vector
                                      for i in keybase.ids]).astype(np.float64)
                hidden = classifier_hidden_np(params, originals)
                keybase.refresh({id: hidden[r] for r, id in enumerate(keybase.ids)})
                peers_by_id = _compute_peers(keybase, observed, n_labels,
                                             contrastive_cfg, bandwidth)

        if best[1] is not None:
            for name, data in best[1].items():
                params[name].data = data
        if checkpoint_dir is not None:
            save_params(params, f"{checkpoint_dir}/fold{fold}.rnck")

        held_pred = _predict(params, store, held_out, encoder_cfg, keybase)
        for id in held_out:
            probs[id] = held_pred[id]
            predicted[id] = int(np.argmax(held_pred[id]))
            fold_of[id] = fold
        trained_ids_by_fold[fold] = trained

    return CorrectionResult(predicted=predicted, probs=probs, fold_of=fold_of,
                            trained_ids_by_fold=trained_ids_by_fold)


def _predict(params, store, ids, encoder_cfg, keybase) -> dict[str, np.ndarray]:
    x = np.stack([store.by_id(i).vector for i in ids]).astype(np.float64)
    if encoder_cfg is None:
        out = classify_head(params, x)
        return {id: out[r] for r, id in enumerate(ids)}
    result = {}
    ctx = keybase.query_batch(x, min(encoder_cfg.k_context, len(keybase) - 1),
                              exclude_ids=list(ids), query_ids=list(ids))
    for r, id in enumerate(ids):
        nb = np.stack([keybase.vector(n) for n in ctx[r].ids])
        enc = encode_with_neighbors(params, encoder_cfg, x[r], nb)
        result[id] = classify_head(params, enc.data)
    return result


def _macro_f1(pred: dict, gold: dict) -> float:
    from .metrics import classification_metrics

    return classification_metrics(pred, gold).macro_f1


# --- applying corrections ----------------------------------------------------

def apply_corrections(store: Datastore, result: CorrectionResult):
    """Replace every observed label with the predicted one; the change log
    lists the ids whose label actually changed."""
    if set(result.predicted) != set(store.ids):
        raise CorrectorError("correction result does not cover the store")
    corrected = copy.deepcopy(store)
    change_log = []
    for rec in corrected.records:
        new = result.predicted[rec.id]
        if new != rec.observed_label:
            change_log.append({
                "id": rec.id,
                "old": rec.observed_label,
                "new": new,
                "prob": float(result.probs[rec.id][new]),
            })
        rec.observed_label = new
    return corrected, change_log


def write_corrections(result: CorrectionResult, store: Datastore, path) -> None:
    rows = []
    for id in store.ids:
        pred = result.predicted[id]
        rows.append({
            "id": id,
            "old": store.by_id(id).observed_label,
            "new": pred,
            "prob": float(result.probs[id][pred]),
            "fold": result.fold_of[id],
            "probs": [float(p) for p in result.probs[id]],
        })
    write_jsonl(path, rows)


def read_corrections(path) -> CorrectionResult:
    predicted, probs, fold_of = {}, {}, {}
    for row in read_jsonl(path):
        predicted[row["id"]] = int(row["new"])
        probs[row["id"]] = np.array(row["probs"], dtype=np.float64)
        fold_of[row["id"]] = int(row["fold"])
    return CorrectionResult(predicted=predicted, probs=probs, fold_of=fold_of)
