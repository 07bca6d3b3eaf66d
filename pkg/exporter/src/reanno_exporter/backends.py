"""Masked-LM inference backends, selected by an id string.

A backend tokenises text, produces one hidden-state row per token, and ranks
candidates for a [MASK] slot. `hash-<dim>` is a deterministic, offline
stand-in whose token vectors come from a hash-seeded generator and whose
tokenisation is whitespace (so exporter pointer indices map one-to-one).
Any other id is handed to the transformers library.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .examples import ExporterError
from .schemes import MASK

FILLER_VOCAB = (
    ",", "was", "is", "of", "the", "founded", "led", "in", "at", "for",
    "chief", "member", "part", "born", "works",
)


class HashBackend:
    """Deterministic embedding backend for tests and desk-scale runs."""

    def __init__(self, dim: int = 32):
        if dim <= 0 or dim % 2 != 0:
            raise ExporterError("hash backend dim must be a positive even number")
        self.dim = dim
        self.max_tokens = 512
        self._cache: dict[str, np.ndarray] = {}

    @property
    def id(self) -> str:
        return f"hash-{self.dim}"

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def _vector(self, token: str) -> np.ndarray:
        if token not in self._cache:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            self._cache[token] = rng.normal(size=self.dim)
        return self._cache[token]

    def encode(self, tokens: list[str]) -> np.ndarray:
        if len(tokens) > self.max_tokens:
            raise ExporterError(f"input of {len(tokens)} tokens exceeds "
                                f"{self.max_tokens}")
        if not tokens:
            raise ExporterError("cannot encode an empty token list")
        base = np.stack([self._vector(t) for t in tokens])
        # cheap context mixing keeps identical tokens distinguishable by position
        pos = np.arange(len(tokens))[:, None] / max(1, len(tokens))
        return base + 0.01 * pos

    def fill_mask(self, text: str, top_k: int = 3) -> list[str]:
        if MASK not in text.split():
            raise ExporterError("fill_mask needs exactly one mask token")
        scored = []
        for cand in FILLER_VOCAB:
            digest = hashlib.blake2b(f"{text}\x00{cand}".encode("utf-8"),
                                     digest_size=8).digest()
            scored.append((int.from_bytes(digest, "little"), cand))
        scored.sort(reverse=True)
        return [cand for _, cand in scored[:top_k]]


class TransformersBackend:  # pragma: no cover - needs model weights
    """Thin adapter over a HuggingFace masked LM (inference only)."""

    def __init__(self, model_id: str = "bert-base-cased"):
        try:
            import torch
            from transformers import AutoModelForMaskedLM, AutoTokenizer
        except ImportError as exc:
            raise ExporterError(f"transformers backend unavailable: {exc}")
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForMaskedLM.from_pretrained(model_id)
        self.model.eval()
        self.id = model_id
        self.max_tokens = self.tokenizer.model_max_length
        self.dim = self.model.config.hidden_size

    def tokenize(self, text: str) -> list[str]:
        return self.tokenizer.tokenize(text.replace(MASK, self.tokenizer.mask_token))

    def encode(self, tokens: list[str]) -> np.ndarray:
        ids = self.tokenizer.convert_tokens_to_ids(tokens)
        with self._torch.no_grad():
            out = self.model(self._torch.tensor([ids]), output_hidden_states=True)
        return out.hidden_states[-1][0].numpy().astype(np.float64)

    def fill_mask(self, text: str, top_k: int = 3) -> list[str]:
        text = text.replace(MASK, self.tokenizer.mask_token)
        enc = self.tokenizer(text, return_tensors="pt")
        mask_pos = (enc.input_ids[0] == self.tokenizer.mask_token_id).nonzero()
        with self._torch.no_grad():
            logits = self.model(**enc).logits[0, int(mask_pos[0])]
        best = logits.topk(top_k).indices.tolist()
        return [self.tokenizer.decode([i]).strip() for i in best]


def get_backend(backend_id: str):
    if backend_id.startswith("hash-"):
        return HashBackend(int(backend_id.split("-", 1)[1]))
    return TransformersBackend(backend_id)
