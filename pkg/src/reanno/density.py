"""Per-class Gaussian kernel density estimation, computed in log space.

log f_t(e) = logsumexp_i( -|e - e_i|^2 / (2 h^2) )
             - log|E_t| - D log h - (D/2) log 2pi

The proper multivariate normalisation (h^D, (2pi)^(D/2)) is shared by every
class, so min-max credibility scores and normalised soft labels are identical
to what the bare 1/(|E_t| h) prefactor would give, while densities stay
dimensionally meaningful. Direct-space kernels underflow universally at
D = 768; everything here stays in logs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .datastore import Datastore


class DensityError(ValueError):
    pass


@dataclass
class SoftLabel:
    probs: np.ndarray  # length |R|, non-negative, sums to 1

    def __post_init__(self):
        if not np.all(np.isfinite(self.probs)):
            raise DensityError("soft label has non-finite components")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise DensityError("soft label does not sum to 1")


class DensityModel:
    """Per-class kernel sets with a shared bandwidth."""

    def __init__(self, class_members: list[np.ndarray], h: float, dim: int):
        if h <= 0:
            raise DensityError("bandwidth h must be positive")
        self.h = float(h)
        self.dim = int(dim)
        self.class_members = [np.asarray(m, dtype=np.float64).reshape(-1, dim)
                              for m in class_members]
        self.n_classes = len(class_members)

    def class_count(self, cls: int) -> int:
        return self.class_members[cls].shape[0]

    def _log_norm(self, cls: int) -> float:
        m = self.class_count(cls)
        return (np.log(m) + self.dim * np.log(self.h)
                + 0.5 * self.dim * np.log(2.0 * np.pi))

    def log_density_batch(self, cls: int, vectors: np.ndarray) -> np.ndarray:
        """log f_cls at each row of `vectors`; -inf for empty classes."""
        if not (0 <= cls < self.n_classes):
            raise DensityError(f"unknown class index {cls}")
        vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, self.dim)
        members = self.class_members[cls]
        if members.shape[0] == 0:
            return np.full(vectors.shape[0], -np.inf)
        sq = _kernels.sqdist(vectors, members)
        kernel_logs = -sq / (2.0 * self.h * self.h)
        return _kernels.row_logsumexp(kernel_logs) - self._log_norm(cls)

    def log_density(self, cls: int, vector: np.ndarray) -> float:
        return float(self.log_density_batch(cls, np.asarray(vector)[None, :])[0])

    def log_density_matrix(self, vectors: np.ndarray) -> np.ndarray:
        """(Q, |R|) matrix of per-class log densities."""
        vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, self.dim)
        out = np.empty((vectors.shape[0], self.n_classes))
        for cls in range(self.n_classes):
            out[:, cls] = self.log_density_batch(cls, vectors)
        return out

    def soft_label_batch(self, vectors: np.ndarray) -> np.ndarray:
        """(Q, |R|) soft labels; empty classes get exactly 0, rows sum to 1."""
        logs = self.log_density_matrix(vectors)
        if np.all(np.isneginf(logs)):
            raise DensityError("all classes are empty")
        denom = logsumexp(logs, axis=1, keepdims=True)
        probs = np.exp(logs - denom)
        empty = np.array([self.class_count(c) == 0 for c in range(self.n_classes)])
        probs[:, empty] = 0.0
        probs /= probs.sum(axis=1, keepdims=True)
        return probs

    def soft_label(self, vector: np.ndarray) -> SoftLabel:
        return SoftLabel(self.soft_label_batch(np.asarray(vector)[None, :])[0])


def fit(store: Datastore, h: float) -> DensityModel:
    """One kernel set per label class; classes absent from the store are empty."""
    if h <= 0:
        raise DensityError("bandwidth h must be positive")
    labels = store.observed()
    mat = store.matrix(dtype=np.float64)
    members = [mat[labels == cls] for cls in range(len(store.labels))]
    return DensityModel(members, h=h, dim=store.dim)
