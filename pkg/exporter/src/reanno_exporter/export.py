"""Encode examples with a masked-LM backend and emit an engine datastore.

Pooling per scheme: prompt kinds take the mask position's hidden state
(dim H); entity kinds concatenate the head and tail pointer states (dim 2H),
averaging over mentions when an entity appears more than once; the
sentence-level baselines pool over the whole sequence.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .datastore_writer import write_datastore_file, write_metadata_sidecar
from .examples import ExporterError, ExporterExample
from .schemes import (
    ENTITY_KINDS,
    MASK,
    POOLING_KINDS,
    PROMPT_KINDS,
    build_prompt,
    mark_entities,
)

CLS = "[CLS]"


def _locate(tokens: list[str], position_hint: int, surface: str) -> int:
    """Backend-token index of the pointer; exporter positions are whitespace
    indices, so identity for whitespace backends, else search by surface."""
    if position_hint < len(tokens) and tokens[position_hint].startswith(surface):
        return position_hint
    matches = [i for i, t in enumerate(tokens) if t.startswith(surface)]
    if not matches:
        raise ExporterError(f"pointer surface {surface!r} not found after tokenisation")
    return min(matches, key=lambda i: abs(i - position_hint))


def encode_example(example: ExporterExample, scheme: str, backend) -> np.ndarray:
    if scheme in PROMPT_KINDS:
        text, mask_pos = build_prompt(example, scheme)
        tokens = backend.tokenize(text)
        hidden = backend.encode(tokens)
        return hidden[_locate(tokens, mask_pos, MASK)]

    if scheme in ENTITY_KINDS:
        marked = mark_entities(example, scheme)
        surface = marked.text.split()
        tokens = backend.tokenize(marked.text)
        hidden = backend.encode(tokens)

        def pooled(pointers: Sequence[int]) -> np.ndarray:
            rows = [hidden[_locate(tokens, p, surface[p])] for p in pointers]
            return np.mean(rows, axis=0)

        return np.concatenate([pooled(marked.head_pointers),
                               pooled(marked.tail_pointers)])

    if scheme in POOLING_KINDS:
        tokens = backend.tokenize(example.context)
        if scheme == "cls-pooler":
            tokens = [CLS] + tokens
            return backend.encode(tokens)[0]
        hidden = backend.encode(tokens)
        return hidden.mean(axis=0) if scheme == "avg-pool" else hidden.max(axis=0)

    raise ExporterError(f"unknown scheme {scheme!r}")


def encode_and_export(
    dataset: list[ExporterExample],
    scheme: str,
    backend,
    output_path,
    metadata_path=None,
) -> dict:
    if not dataset:
        raise ExporterError("empty dataset")
    label_names = sorted({ex.label for ex in dataset})
    label_index = {name: i for i, name in enumerate(label_names)}
    records = []
    metadata_rows = []
    for ex in dataset:
        vector = encode_example(ex, scheme, backend)
        records.append((ex.id, label_index[ex.label], vector))
        metadata_rows.append({
            "id": ex.id,
            "context": ex.context,
            "head_span": list(ex.head_spans[0]),
            "tail_span": list(ex.tail_spans[0]),
            "head_type": ex.head_type,
            "tail_type": ex.tail_type,
        })
    dim = len(records[0][2])
    write_datastore_file(output_path, dim, label_names, records)
    if metadata_path is not None:
        write_metadata_sidecar(metadata_path, metadata_rows)
    return {"records": len(records), "dim": dim, "labels": len(label_names),
            "datastore": str(output_path)}
