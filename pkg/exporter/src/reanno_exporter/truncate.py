"""Incremental truncation of documents that exceed the backend's input limit.

Mode 1 keeps the contiguous span from the first to the last entity-bearing
sentence; Mode 2 keeps entity-bearing sentences only; Mode 3 drops
non-query entity sentences from the document end, then query sentences, but
never a query mention sentence before every other sentence is gone.
"""
from __future__ import annotations

from dataclasses import dataclass

from .examples import ExporterError


@dataclass
class TruncationResult:
    kept_indices: list[int]
    mode: int  # 0 = untouched

    def sentences(self, all_sentences: list[str]) -> list[str]:
        return [all_sentences[i] for i in self.kept_indices]


def _length(sentences, indices) -> int:
    return sum(len(sentences[i].split()) for i in indices)


def truncate_document(
    sentences: list[str],
    entity_sentence_indices: set[int],
    query_sentence_indices: set[int],
    max_tokens: int,
) -> TruncationResult:
    if max_tokens <= 0:
        raise ExporterError("max_tokens must be positive")
    if not query_sentence_indices <= entity_sentence_indices:
        raise ExporterError("query sentences must be entity sentences")
    everything = list(range(len(sentences)))
    if _length(sentences, everything) <= max_tokens:
        return TruncationResult(everything, mode=0)

    if not entity_sentence_indices:
        raise ExporterError("cannot truncate without entity-bearing sentences")
    lo, hi = min(entity_sentence_indices), max(entity_sentence_indices)
    mode1 = list(range(lo, hi + 1))
    if _length(sentences, mode1) <= max_tokens:
        return TruncationResult(mode1, mode=1)

    mode2 = sorted(entity_sentence_indices)
    if _length(sentences, mode2) <= max_tokens:
        return TruncationResult(mode2, mode=2)

    kept = list(mode2)
    non_query = [i for i in kept if i not in query_sentence_indices]
    while _length(sentences, kept) > max_tokens and non_query:
        kept.remove(non_query.pop())  # drop from the document end first
    while _length(sentences, kept) > max_tokens and len(kept) > 1:
        kept.pop()
    if _length(sentences, kept) > max_tokens:
        raise ExporterError("cannot fit even a single sentence under max_tokens")
    return TruncationResult(kept, mode=3)
