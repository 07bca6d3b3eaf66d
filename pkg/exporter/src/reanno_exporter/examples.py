"""Normalised input example: a context with character-level entity spans."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


class ExporterError(ValueError):
    pass


@dataclass
class ExporterExample:
    id: str
    label: str
    context: str
    head_spans: list[tuple[int, int]]
    tail_spans: list[tuple[int, int]]
    head_type: Optional[str] = None
    tail_type: Optional[str] = None

    def __post_init__(self):
        if not self.head_spans or not self.tail_spans:
            raise ExporterError(f"example {self.id}: missing entity spans")
        n = len(self.context)
        for lo, hi in self.head_spans + self.tail_spans:
            if not (0 <= lo < hi <= n):
                raise ExporterError(f"example {self.id}: span ({lo},{hi}) out of bounds")
        for h in self.head_spans:
            for t in self.tail_spans:
                if h[0] < t[1] and t[0] < h[1]:
                    raise ExporterError(f"example {self.id}: overlapping spans {h} {t}")

    @property
    def head_text(self) -> str:
        lo, hi = self.head_spans[0]
        return self.context[lo:hi]

    @property
    def tail_text(self) -> str:
        lo, hi = self.tail_spans[0]
        return self.context[lo:hi]
