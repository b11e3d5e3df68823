"""Symmetric-matrix algebra for the operator catalog.

Matrices are plain ``(n, n)`` float arrays and vectors ``(n,)`` arrays.
Derivatives with respect to a matrix treat every entry ``X[i, j]`` as an
independent variable of a general square matrix; no 1/2 factor is applied
to off-diagonal entries.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations

import numpy as np

MAX_DIM = 8


def _square(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    if not 1 <= X.shape[0] <= MAX_DIM:
        raise ValueError(f"matrix dimension must be in 1..{MAX_DIM}, got {X.shape[0]}")
    return X


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n={n}, got {k}")


def tensor(p, q) -> np.ndarray:
    """Tensor product ``p (x) q`` with entries ``[q_i p_j]``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return np.outer(q, p)


@lru_cache(maxsize=None)
def _subsets(n: int, k: int) -> np.ndarray:
    return np.array(list(combinations(range(n), k)), dtype=np.intp).reshape(-1, k)


def _det_stack(A: np.ndarray) -> np.ndarray:
    """Determinants of a stack of ``(m, k, k)`` matrices, ``k = 0`` allowed."""
    k = A.shape[-1]
    if k == 0:
        return np.ones(A.shape[:-2])
    if k == 1:
        return A[..., 0, 0].copy()
    if k == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return np.linalg.det(A)


def ktrace(X, k: int) -> float:
    """Sum of all ``k x k`` principal minors of ``X``."""
    X = _square(X)
    n = X.shape[0]
    _check_k(k, n)
    idx = _subsets(n, k)
    minors = X[idx[:, :, None], idx[:, None, :]]
    return float(np.sum(_det_stack(minors)))


def ktrace_gradient(X, k: int) -> np.ndarray:
    """Matrix of partial derivatives ``d tr_k(X) / d X_ij``.

    For each principal block ``X_I`` the derivative of ``det X_I`` with respect
    to its entry ``(a, b)`` is the cofactor ``C_ab``; the blocks are summed back
    into the full matrix.
    """
    X = _square(X)
    n = X.shape[0]
    _check_k(k, n)
    out = np.zeros((n, n))
    if k == 1:
        np.fill_diagonal(out, 1.0)
        return out
    for I in _subsets(n, k):
        block = X[np.ix_(I, I)]
        for a in range(k):
            rows = [r for r in range(k) if r != a]
            for b in range(k):
                cols = [c for c in range(k) if c != b]
                minor = block[np.ix_(rows, cols)]
                out[I[a], I[b]] += (-1.0) ** (a + b) * float(_det_stack(minor[None])[0])
    return out


def rank_one_update_check(X, p, k: int) -> float:
    """Residual of ``tr_k(X +- p(x)p) = tr_k(X) +- <S_k(X) p, p>``."""
    X = _square(X)
    p = np.asarray(p, dtype=float)
    if p.shape != (X.shape[0],):
        raise ValueError(f"dimension mismatch: p has shape {p.shape}, X is {X.shape}")
    pp = tensor(p, p)
    base = ktrace(X, k)
    quad = float(p @ ktrace_gradient(X, k) @ p)
    return abs(ktrace(X + pp, k) - base - quad) + abs(ktrace(X - pp, k) - base + quad)
