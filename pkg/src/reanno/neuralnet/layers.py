"""Neural building blocks assembled from the autodiff primitives."""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import GraphError, Tensor


def softmax_xent(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy over a batch, stable via max-shift.

    `targets` is either an int array of class indices (one-hot rows) or a
    (B, K) distribution whose rows must sum to 1 within 1e-6.
    """
    b, k = logits.data.shape
    targets = np.asarray(targets)
    if targets.ndim == 1:
        onehot = np.zeros((b, k))
        onehot[np.arange(b), targets.astype(int)] = 1.0
        targets = onehot
    else:
        targets = targets.astype(np.float64)
        if targets.shape != (b, k):
            raise GraphError(f"target shape {targets.shape} != logits {logits.data.shape}")
        if np.any(np.abs(targets.sum(axis=1) - 1.0) > 1e-6):
            raise GraphError("distribution targets must row-sum to 1")
    logp = ad.log_softmax(logits, axis=-1)
    per_row = ad.sum_(ad.mul(logp, Tensor(-targets)), axis=-1)
    return ad.mean_(per_row)


def sincos_positions(length: int, d: int) -> np.ndarray:
    """Sinusoidal position table: sin at even columns, cos at odd columns,
    with angular frequency 1/10000^(2k/d) for column pair k."""
    if d % 2 != 0:
        raise GraphError("positional encoding dimension must be even")
    pos = np.arange(length, dtype=np.float64)[:, None]
    k = np.arange(d // 2, dtype=np.float64)[None, :]
    omega = 1.0 / np.power(10000.0, 2.0 * k / d)
    table = np.empty((length, d))
    table[:, 0::2] = np.sin(omega * pos)
    table[:, 1::2] = np.cos(omega * pos)
    return table


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """He-style fan-in uniform initialisation."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder_params(
    rng: np.random.Generator, d: int, layers: int, ff_mult: int = 4
) -> dict[str, Tensor]:
    """Parameter set for a stack of post-norm encoder blocks."""
    params: dict[str, Tensor] = {}
    for layer in range(layers):
        p = f"enc{layer}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + name] = Tensor(init_linear(rng, d, d))
            params[p + name.replace("w", "b")] = Tensor(np.zeros(d))
        params[p + "ln1_gamma"] = Tensor(np.ones(d))
        params[p + "ln1_beta"] = Tensor(np.zeros(d))
        params[p + "ln2_gamma"] = Tensor(np.ones(d))
        params[p + "ln2_beta"] = Tensor(np.zeros(d))
        params[p + "ff_w1"] = Tensor(init_linear(rng, d, ff_mult * d))
        params[p + "ff_b1"] = Tensor(np.zeros(ff_mult * d))
        params[p + "ff_w2"] = Tensor(init_linear(rng, ff_mult * d, d))
        params[p + "ff_b2"] = Tensor(np.zeros(d))
    return params


def multi_head_attention(
    seq: Tensor,
    heads: int,
    wq: Tensor, bq: Tensor,
    wk: Tensor, bk: Tensor,
    wv: Tensor, bv: Tensor,
    wo: Tensor, bo: Tensor,
    weights_sink: Optional[list] = None,
) -> Tensor:
    """Scaled dot-product self-attention over an (L, d) sequence.

    Every attention-weight row is a softmax, so it sums to 1.
    """
    length, d = seq.data.shape
    if d % heads != 0:
        raise GraphError(f"model dim {d} not divisible by {heads} heads")
    dh = d // heads
    q = ad.add(ad.matmul(seq, wq), bq)
    k = ad.add(ad.matmul(seq, wk), bk)
    v = ad.add(ad.matmul(seq, wv), bv)

    def split(t: Tensor) -> Tensor:  # (L, d) -> (heads, L, dh)
        return ad.transpose(ad.reshape(t, (length, heads, dh)), (1, 0, 2))

    qh, kh, vh = split(q), split(k), split(v)
    scores = ad.mul(ad.matmul(qh, ad.transpose(kh, (0, 2, 1))),
                    Tensor(1.0 / np.sqrt(dh)))
    weights = ad.softmax(scores, axis=-1)  # (heads, L, L)
    if weights_sink is not None:
        weights_sink.append(np.array(weights.data, copy=True))
    ctx = ad.matmul(weights, vh)  # (heads, L, dh)
    merged = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (length, d))
    return ad.add(ad.matmul(merged, wo), bo)


def attention_encoder_block(
    seq: Tensor,
    heads: int,
    params: dict[str, Tensor],
    prefix: str = "enc0.",
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Post-norm block: self-attention + residual + layer norm, then a
    position-wise ReLU feed-forward + residual + layer norm."""
    p = lambda name: params[prefix + name]
    attn = multi_head_attention(
        seq, heads,
        p("wq"), p("bq"), p("wk"), p("bk"), p("wv"), p("bv"), p("wo"), p("bo"),
    )
    attn = ad.dropout(attn, dropout_rate, rng)
    x = ad.layer_norm(ad.add(seq, attn), p("ln1_gamma"), p("ln1_beta"))
    ff = ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(x, p("ff_w1")), p("ff_b1"))),
                          p("ff_w2")), p("ff_b2"))
    ff = ad.dropout(ff, dropout_rate, rng)
    return ad.layer_norm(ad.add(x, ff), p("ln2_gamma"), p("ln2_beta"))


def encoder_stack(
    seq: Tensor,
    heads: int,
    layers: int,
    params: dict[str, Tensor],
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    x = seq
    for layer in range(layers):
        x = attention_encoder_block(x, heads, params, prefix=f"enc{layer}.",
                                    dropout_rate=dropout_rate, rng=rng)
    return x
