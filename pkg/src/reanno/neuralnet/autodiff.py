"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward() on a
scalar walks the tape in reverse topological order. Primitives: matmul, add,
mul, relu, layer_norm, softmax, dropout (seeded), concat, slice, plus the
reductions and elementwise pieces the composed graphs need. All arithmetic is
64-bit; datastore vectors are upcast on entry.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class GraphError(ValueError):
    pass


# relu activation masks recorded here while a _MaskRecorder is active;
# grad_check uses them to detect parameters sitting at a kink.
_mask_sink: Optional[list[np.ndarray]] = None


class _MaskRecorder:
    def __enter__(self):
        global _mask_sink
        _mask_sink = []
        return _mask_sink

    def __exit__(self, *exc):
        global _mask_sink
        _mask_sink = None
        return False


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = parents
        self._backward: Optional[Callable[[np.ndarray], None]] = backward

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.shape not in ((), (1,)):
            raise GraphError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen = set()

        def visit(t: Tensor):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for t in reversed(topo):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            t._accumulate(g)
            if t._backward is not None:
                for parent, pg in t._backward(g):
                    if id(parent) in grads:
                        grads[id(parent)] = grads[id(parent)] + pg
                    else:
                        grads[id(parent)] = pg

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), _wrap(-1.0)))

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return slice_(self, key)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return Tensor(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(g):
        return ((a, _unbroadcast(g * b.data, a.data.shape)),
                (b, _unbroadcast(g * a.data, b.data.shape)))

    return Tensor(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim < 1 or b.data.ndim < 1:
        raise GraphError("matmul needs at least 1-d operands")
    if a.data.shape[-1] != b.data.shape[0 if b.data.ndim == 1 else -2]:
        raise GraphError(f"matmul shape mismatch {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.data.ndim == 1 and b.data.ndim == 1:
            return ((a, g * b.data), (b, g * a.data))
        if b.data.ndim == 1:
            return ((a, np.outer(g, b.data).reshape(a.data.shape)), (b, a.data.T @ g))
        if a.data.ndim == 1:
            return ((a, g @ b.data.T), (b, np.outer(a.data, g)))
        return ((a, g @ np.swapaxes(b.data, -1, -2)),
                (b, np.swapaxes(a.data, -1, -2) @ g))

    return Tensor(out_data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    if _mask_sink is not None:
        _mask_sink.append(mask)
    out_data = np.where(mask, a.data, 0.0)

    def backward(g):
        return ((a, g * mask),)

    return Tensor(out_data, (a,), backward)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        n = a.data.shape[-1]
        g_xhat = g * gamma.data
        g_a = inv * (
            g_xhat
            - g_xhat.mean(axis=-1, keepdims=True)
            - xhat * (g_xhat * xhat).mean(axis=-1, keepdims=True)
        )
        g_gamma = _unbroadcast(g * xhat, gamma.data.shape)
        g_beta = _unbroadcast(g, beta.data.shape)
        return ((a, g_a), (gamma, g_gamma), (beta, g_beta))

    return Tensor(out_data, (a, gamma, beta), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return ((a, s * (g - dot)),)

    return Tensor(s, (a,), backward)


def dropout(a: Tensor, rate: float, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout; rate 0 is the identity in forward and gradient."""
    if not (0.0 <= rate < 1.0):
        raise GraphError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return a
    if rng is None:
        raise GraphError("dropout with rate > 0 needs a seeded generator")
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    return mul(a, Tensor(keep))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        outs = []
        for i, t in enumerate(tensors):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            outs.append((t, g[tuple(sl)]))
        return tuple(outs)

    return Tensor(out_data, tuple(tensors), backward)


def slice_(a: Tensor, key) -> Tensor:
    out_data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return ((a, full),)

    return Tensor(out_data, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(g):
        return ((a, g.reshape(a.data.shape)),)

    return Tensor(out_data, (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    out_data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        return ((a, np.transpose(g, inv)),)

    return Tensor(out_data, (a,), backward)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g, a.data.shape).copy()),)

    return Tensor(out_data, (a,), backward)


def mean_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), _wrap(1.0 / count))


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        return ((a, g * out_data),)

    return Tensor(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward(g):
        return ((a, g / a.data),)

    return Tensor(out_data, (a,), backward)


def power(a: Tensor, p: float) -> Tensor:
    out_data = a.data ** p

    def backward(g):
        return ((a, g * p * a.data ** (p - 1)),)

    return Tensor(out_data, (a,), backward)


def l2_normalize(a: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Rows scaled to unit Euclidean norm (composed from primitives)."""
    sq = sum_(mul(a, a), axis=axis, keepdims=True)
    inv = power(add(sq, _wrap(eps)), -0.5)
    return mul(a, inv)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    s = np.exp(out_data)

    def backward(g):
        return ((a, g - s * g.sum(axis=axis, keepdims=True)),)

    return Tensor(out_data, (a,), backward)


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    passed: bool
    excluded: bool = False
    note: str = ""


def _masks_fingerprint(masks: list[np.ndarray]) -> tuple:
    return tuple(m.tobytes() for m in masks)


def grad_check(
    build_loss: Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    atol: float = 1e-8,
) -> list[GradCheckEntry]:
    """Central finite differences against reverse-mode gradients.

    `build_loss` must rebuild the graph from the given parameter dict on every
    call. Parameter elements whose +-step perturbation flips any relu mask are
    excluded with a warning instead of failed (the derivative is genuinely
    discontinuous there). Elements where analytic and numeric agree within
    `atol` absolutely are accepted regardless of relative error: central
    differences cannot resolve gradients below their own roundoff noise, and
    mathematically inert parameters (zero gradient) would otherwise divide
    noise by noise.
    """
    for p in params.values():
        p.grad = None
    with _MaskRecorder() as base_masks:
        loss = build_loss(params)
    base_fp = _masks_fingerprint(base_masks)
    loss.backward()
    analytic = {name: np.array(p.grad, copy=True) if p.grad is not None
                else np.zeros_like(p.data) for name, p in params.items()}

    report = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        worst = 0.0
        excluded = False
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            with _MaskRecorder() as masks_hi:
                hi = float(build_loss(params).data)
            fp_hi = _masks_fingerprint(masks_hi)
            flat[j] = orig - step
            with _MaskRecorder() as masks_lo:
                lo = float(build_loss(params).data)
            fp_lo = _masks_fingerprint(masks_lo)
            flat[j] = orig
            if fp_hi != base_fp or fp_lo != base_fp:
                excluded = True
                continue
            numeric = (hi - lo) / (2.0 * step)
            a = analytic[name].reshape(-1)[j]
            if abs(a - numeric) <= atol:
                continue
            denom = abs(a) + abs(numeric)
            worst = max(worst, abs(a - numeric) / denom)
        note = "perturbation crossed a relu kink" if excluded else ""
        report.append(GradCheckEntry(name, worst, passed=worst <= tolerance,
                                     excluded=excluded, note=note))
    return report
