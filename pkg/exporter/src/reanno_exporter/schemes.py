"""Prompt and entity-marker input construction.

Pointer positions are indices into whitespace tokens of the emitted text; a
pointer token always *starts with* the scheme's marker or mask surface
(adjacent punctuation may adjoin the final token). Stripping the inserted
marker substrings restores the original context byte-for-byte.
"""
from __future__ import annotations

from dataclasses import dataclass
from .examples import ExporterError, ExporterExample

MASK = "[MASK]"

PROMPT_KINDS = ("relation-prompt", "fixed-prompt-is-of")
ENTITY_KINDS = ("entity-position", "entity-marker", "entity-marker-punct",
                "entity-mask", "typed-entity-marker", "typed-entity-marker-punct")
POOLING_KINDS = ("cls-pooler", "avg-pool", "max-pool")
ALL_KINDS = PROMPT_KINDS + ENTITY_KINDS + POOLING_KINDS


@dataclass
class MarkedText:
    text: str
    head_pointers: list[int]  # whitespace-token indices of opening markers
    tail_pointers: list[int]


def _token_index(text_prefix: str) -> int:
    """Whitespace-token index of the character position ending text_prefix."""
    return len(text_prefix.split())


def build_prompt(example: ExporterExample, kind: str) -> tuple[str, int]:
    """Context followed by the template; returns the mask's token position."""
    if kind not in PROMPT_KINDS:
        raise ExporterError(f"{kind!r} is not a prompt kind")
    head, tail = example.head_text, example.tail_text
    if kind == "relation-prompt":
        template = f"{head} {MASK} {tail}"
    else:
        template = f"{head} is {MASK} of {tail}"
    text = f"{example.context} {template}"
    tokens = text.split()
    mask_positions = [i for i, t in enumerate(tokens) if t == MASK]
    if len(mask_positions) != 1:
        raise ExporterError("prompt must contain exactly one mask token")
    return text, mask_positions[0]


def _wrappers(kind: str, example: ExporterExample):
    """(head_pre, head_post, tail_pre, tail_post) marker strings."""
    if kind == "entity-marker":
        return "[H]", "[/H]", "[T]", "[/T]"
    if kind == "entity-marker-punct":
        return "@", "@", "#", "#"
    if kind == "typed-entity-marker":
        _require_types(example)
        return (f"<S:{example.head_type}>", f"</S:{example.head_type}>",
                f"<O:{example.tail_type}>", f"</O:{example.tail_type}>")
    if kind == "typed-entity-marker-punct":
        _require_types(example)
        return (f"@ [ {example.head_type.lower()} ]", "@",
                f"# ! {example.tail_type.lower()} !", "#")
    raise ExporterError(f"{kind!r} has no wrapper markers")


def _require_types(example: ExporterExample):
    if example.head_type is None or example.tail_type is None:
        raise ExporterError(f"example {example.id}: typed scheme needs NER types")


def mark_entities(example: ExporterExample, kind: str) -> MarkedText:
    if kind not in ENTITY_KINDS:
        raise ExporterError(f"{kind!r} is not an entity kind")
    context = example.context

    if kind == "entity-position":
        head_ptrs = [_token_index(context[:lo]) for lo, _ in example.head_spans]
        tail_ptrs = [_token_index(context[:lo]) for lo, _ in example.tail_spans]
        return MarkedText(context, head_ptrs, tail_ptrs)

    if kind == "entity-mask":
        _require_types(example)
        inserts = (
            [(span, f"[SUBJ-{example.head_type}]", "head") for span in example.head_spans]
            + [(span, f"[OBJ-{example.tail_type}]", "tail") for span in example.tail_spans]
        )
        inserts.sort(key=lambda item: item[0][0])
        out, pos = [], 0
        head_ptrs, tail_ptrs = [], []
        for (lo, hi), mask, side in inserts:
            out.append(context[pos:lo])
            ptr = _token_index("".join(out))
            (head_ptrs if side == "head" else tail_ptrs).append(ptr)
            out.append(mask)
            pos = hi
        out.append(context[pos:])
        return MarkedText("".join(out), head_ptrs, tail_ptrs)

    head_pre, head_post, tail_pre, tail_post = _wrappers(kind, example)
    inserts = (
        [(span, head_pre, head_post, "head") for span in example.head_spans]
        + [(span, tail_pre, tail_post, "tail") for span in example.tail_spans]
    )
    inserts.sort(key=lambda item: item[0][0])
    out, pos = [], 0
    head_ptrs, tail_ptrs = [], []
    for (lo, hi), pre, post, side in inserts:
        out.append(context[pos:lo])
        ptr = _token_index("".join(out))
        (head_ptrs if side == "head" else tail_ptrs).append(ptr)
        out.append(f"{pre} {context[lo:hi]} {post}")
        pos = hi
    out.append(context[pos:])
    return MarkedText("".join(out), head_ptrs, tail_ptrs)


def strip_markers(marked: str, example: ExporterExample, kind: str) -> str:
    """Inverse of marker insertion (marker schemes only)."""
    head_pre, head_post, tail_pre, tail_post = _wrappers(kind, example)
    out = marked
    for pre, post in ((head_pre, head_post), (tail_pre, tail_post)):
        out = out.replace(f"{pre} ", "", -1).replace(f" {post}", "", -1)
    return out
