"""Hot numeric kernels: pairwise squared distances and row-wise log-sum-exp.

Two implementations live here. The numba path JIT-compiles tight loops; the
numpy path vectorises over rows but accumulates dimension-major so both
backends produce bit-identical squared distances (sum over dimensions in
ascending index order, 64-bit). Backend selection:

    REANNO_BACKEND=auto   numba if importable, else numpy (default)
    REANNO_BACKEND=numba  require numba, fail loudly if missing
    REANNO_BACKEND=numpy  force the pure-numpy path
"""
from __future__ import annotations

import os

import numpy as np
from scipy.special import logsumexp as _scipy_logsumexp


def sqdist_numpy(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, shape (Q, N), accumulated dimension-major."""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    out = np.zeros((queries.shape[0], keys.shape[0]), dtype=np.float64)
    for t in range(queries.shape[1]):
        diff = queries[:, t, None] - keys[None, :, t]
        out += diff * diff
    return out


def row_logsumexp_numpy(mat: np.ndarray) -> np.ndarray:
    """log(sum(exp(row))) per row; empty rows give -inf."""
    if mat.shape[1] == 0:
        return np.full(mat.shape[0], -np.inf)
    return _scipy_logsumexp(mat, axis=1)


_choice = os.environ.get("REANNO_BACKEND", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"REANNO_BACKEND must be auto|numba|numpy, got {_choice!r}")

_numba_err = None
sqdist_numba = None
row_logsumexp_numba = None
if _choice in ("auto", "numba"):
    try:
        from numba import njit

        @njit(cache=True, nogil=True)
        def _sqdist_nb(queries, keys):  # pragma: no cover - compiled
            q, n, d = queries.shape[0], keys.shape[0], queries.shape[1]
            out = np.zeros((q, n), dtype=np.float64)
            for i in range(q):
                for j in range(n):
                    acc = 0.0
                    for t in range(d):
                        diff = queries[i, t] - keys[j, t]
                        acc += diff * diff
                    out[i, j] = acc
            return out

        @njit(cache=True, nogil=True)
        def _row_lse_nb(mat):  # pragma: no cover - compiled
            rows, cols = mat.shape
            out = np.empty(rows, dtype=np.float64)
            for i in range(rows):
                m = -np.inf
                for j in range(cols):
                    if mat[i, j] > m:
                        m = mat[i, j]
                if m == -np.inf:
                    out[i] = -np.inf
                    continue
                s = 0.0
                for j in range(cols):
                    s += np.exp(mat[i, j] - m)
                out[i] = m + np.log(s)
            return out

        def sqdist_numba(queries, keys):
            queries = np.ascontiguousarray(queries, dtype=np.float64)
            keys = np.ascontiguousarray(keys, dtype=np.float64)
            return _sqdist_nb(queries, keys)

        def row_logsumexp_numba(mat):
            mat = np.ascontiguousarray(mat, dtype=np.float64)
            if mat.shape[1] == 0:
                return np.full(mat.shape[0], -np.inf)
            return _row_lse_nb(mat)

    except ImportError as exc:  # pragma: no cover - environment dependent
        _numba_err = exc
        if _choice == "numba":
            raise ImportError("REANNO_BACKEND=numba but numba is not importable") from exc

if _choice == "numpy" or sqdist_numba is None:
    BACKEND = "numpy"
    sqdist = sqdist_numpy
    row_logsumexp = row_logsumexp_numpy
else:
    BACKEND = "numba"
    sqdist = sqdist_numba
    row_logsumexp = row_logsumexp_numba


def backend_name() -> str:
    return BACKEND
