"""Dataset readers: the public TACRED and DocRED layouts plus a generic
JSONL layout (context, spans, label). Document inputs are truncated here,
before span arithmetic, so downstream marking sees final contexts."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .examples import ExporterError, ExporterExample
from .truncate import truncate_document


def _char_span_from_tokens(tokens: list[str], start: int, end: int) -> tuple[int, int]:
    """Char span of tokens[start:end+1] inside ' '.join(tokens)."""
    lo = sum(len(t) + 1 for t in tokens[:start])
    hi = lo + len(" ".join(tokens[start:end + 1]))
    return lo, hi


def read_tacred(path) -> list[ExporterExample]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    out = []
    for row in data:
        tokens = row["token"]
        context = " ".join(tokens)
        out.append(ExporterExample(
            id=str(row.get("id", len(out))),
            label=row["relation"],
            context=context,
            head_spans=[_char_span_from_tokens(tokens, row["subj_start"], row["subj_end"])],
            tail_spans=[_char_span_from_tokens(tokens, row["obj_start"], row["obj_end"])],
            head_type=row.get("subj_type"),
            tail_type=row.get("obj_type"),
        ))
    return out


def read_generic(path) -> list[ExporterExample]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        out.append(ExporterExample(
            id=str(row.get("id", len(out))),
            label=row["label"],
            context=row["context"],
            head_spans=[tuple(row["head_span"])],
            tail_spans=[tuple(row["tail_span"])],
            head_type=row.get("head_type"),
            tail_type=row.get("tail_type"),
        ))
    return out


def read_docred(path, max_tokens: Optional[int] = None) -> list[ExporterExample]:
    """One example per (head, tail, relation) fact, truncated to max_tokens."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    out = []
    for doc in data:
        sents = [" ".join(toks) for toks in doc["sents"]]
        vertex_set = doc["vertexSet"]
        entity_sentences = {m["sent_id"] for entity in vertex_set for m in entity}
        for fact_no, fact in enumerate(doc.get("labels", [])):
            head_mentions = vertex_set[fact["h"]]
            tail_mentions = vertex_set[fact["t"]]
            query_sentences = {m["sent_id"] for m in head_mentions + tail_mentions}
            if max_tokens is not None:
                trunc = truncate_document(sents, entity_sentences,
                                          query_sentences, max_tokens)
                kept = trunc.kept_indices
            else:
                kept = list(range(len(sents)))
            kept_set = set(kept)
            offsets = {}
            running = 0
            for i in kept:
                offsets[i] = running
                running += len(sents[i]) + 1
            context = " ".join(sents[i] for i in kept)

            def spans(mentions):
                found = []
                for m in mentions:
                    if m["sent_id"] not in kept_set:
                        continue
                    toks = doc["sents"][m["sent_id"]]
                    lo, hi = _char_span_from_tokens(toks, m["pos"][0], m["pos"][1] - 1)
                    base = offsets[m["sent_id"]]
                    found.append((base + lo, base + hi))
                return found

            head_spans, tail_spans = spans(head_mentions), spans(tail_mentions)
            if not head_spans or not tail_spans:
                raise ExporterError(
                    f"{doc.get('title', '?')}: truncation removed every mention "
                    f"of a query entity")
            out.append(ExporterExample(
                id=f"{doc.get('title', 'doc')}#{fact_no}",
                label=str(fact["r"]),
                context=context,
                head_spans=head_spans,
                tail_spans=tail_spans,
                head_type=head_mentions[0].get("type"),
                tail_type=tail_mentions[0].get("type"),
            ))
    return out


READERS = {"tacred": read_tacred, "docred": read_docred, "generic": read_generic}


def read_dataset(path, layout: str, max_tokens: Optional[int] = None):
    if layout not in READERS:
        raise ExporterError(f"unknown dataset layout {layout!r}")
    if layout == "docred":
        return read_docred(path, max_tokens=max_tokens)
    return READERS[layout](path)
