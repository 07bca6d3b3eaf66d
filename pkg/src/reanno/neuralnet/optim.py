"""AdamW with decoupled weight decay, plus the warmup-then-constant schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


class OptimError(ValueError):
    pass


@dataclass
class AdamW:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def init_state(self, params: dict[str, Tensor]) -> None:
        for name, p in params.items():
            self.m[name] = np.zeros_like(p.data)
            self.v[name] = np.zeros_like(p.data)
        self.step_count = 0

    def step(self, params: dict[str, Tensor], lr_scale: float = 1.0) -> None:
        """Decoupled decay (p <- p - lr*wd*p) first, then the bias-corrected
        Adam update. Missing gradients are treated as zero."""
        if not self.m:
            raise OptimError("optimizer state not initialised")
        lr = self.lr * lr_scale
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            if name not in self.m:
                raise OptimError(f"no state for parameter {name!r}")
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def warmup_constant_lr(step: int, total_steps: int, warmup_ratio: float) -> float:
    """Linear warmup over warmup_ratio of total steps, then constant 1.0."""
    warm = max(1, int(round(warmup_ratio * total_steps)))
    if step < warm:
        return (step + 1) / warm
    return 1.0


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
