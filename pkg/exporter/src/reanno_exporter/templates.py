"""Per-example template generation by iterative mask filling.

The procedure: start from "head [MASK] tail", let the backend fill the mask,
keep the decoded token and open a new mask after it, repeat until three
consecutive tokens sit between the mentions, then re-mask the middle one.
Decoded tokens are joined with single spaces.
"""
from __future__ import annotations

import numpy as np

from .examples import ExporterError, ExporterExample
from .schemes import MASK


def generate_template(
    example: ExporterExample,
    backend,
    fill_steps: int = 3,
    candidate_rank: str = "top1",
    seed: int = 0,
) -> tuple[str, int]:
    """Returns (prompt text, mask token position)."""
    if candidate_rank not in ("top1", "random-top3"):
        raise ExporterError(f"unknown candidate_rank {candidate_rank!r}")
    rng = np.random.default_rng(np.uint64(seed))
    head, tail = example.head_text, example.tail_text
    filled: list[str] = []
    for _ in range(fill_steps):
        middle = " ".join(filled + [MASK])
        prompt = f"{example.context} {head} {middle} {tail}"
        candidates = backend.fill_mask(prompt, top_k=3)
        if not candidates:
            raise ExporterError("backend returned no mask candidates")
        if candidate_rank == "top1":
            token = candidates[0]
        else:
            token = candidates[int(rng.integers(0, min(3, len(candidates))))]
        filled.append(token)
    middle_idx = len(filled) // 2
    filled[middle_idx] = MASK
    text = f"{example.context} {head} {' '.join(filled)} {tail}"
    tokens = text.split()
    positions = [i for i, t in enumerate(tokens) if t == MASK]
    if len(positions) != 1:
        raise ExporterError("generated template must contain exactly one mask")
    return text, positions[0]
