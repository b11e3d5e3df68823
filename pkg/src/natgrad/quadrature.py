"""One-dimensional quadrature helpers: adaptive Simpson meshes and Gauss-Legendre panels."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

MAX_DEPTH = 50


class QuadratureError(ArithmeticError):
    pass


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_panels(func, edges: np.ndarray, order: int = 10) -> np.ndarray:
    """Integral of the vectorised ``func`` over each panel ``[edges[i], edges[i+1]]``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(func(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite integrand value")
    return half * (vals @ w)


def adaptive_simpson_mesh(func, a: float, b: float, tol: float, min_panels: int = 16) -> np.ndarray:
    """Knots of an adaptive Simpson refinement of ``func`` on ``[a, b]``.

    A panel is accepted when ``|S2 - S1| <= 15 tol max(1, |S2|)``, i.e. the
    Richardson error estimate meets ``tol`` relative to the panel's magnitude.
    ``func`` must accept numpy arrays. Returns the sorted knots, ``a`` and
    ``b`` included.
    """
    if not b > a:
        raise ValueError("need a < b")
    if tol <= 0:
        raise ValueError("tol must be positive")
    start = np.linspace(a, b, min_panels + 1)
    knots = [start[:1]]
    # breadth-first refinement keeps every pass vectorised
    pending = np.stack([start[:-1], start[1:]], axis=1)
    depth = 0
    accepted = []
    while pending.size:
        if depth > MAX_DEPTH:
            raise QuadratureError(f"adaptive Simpson did not converge on [{a}, {b}]")
        lo, hi = pending[:, 0], pending[:, 1]
        mid = 0.5 * (lo + hi)
        q1 = 0.5 * (lo + mid)
        q3 = 0.5 * (mid + hi)
        pts = np.stack([lo, q1, mid, q3, hi], axis=1)
        f = np.asarray(func(pts), dtype=float)
        if not np.all(np.isfinite(f)):
            raise QuadratureError("non-finite integrand value")
        h = hi - lo
        s1 = h / 6 * (f[:, 0] + 4 * f[:, 2] + f[:, 4])
        s2 = h / 12 * (f[:, 0] + 4 * f[:, 1] + 2 * f[:, 2] + 4 * f[:, 3] + f[:, 4])
        ok = np.abs(s2 - s1) <= 15 * tol * np.maximum(1.0, np.abs(s2))
        # stop splitting panels that have reached floating-point resolution
        ok |= (mid <= lo) | (mid >= hi) | (h <= 1e-13 * np.maximum(1.0, np.abs(mid)))
        accepted.append(pending[ok])
        bad = pending[~ok]
        bmid = 0.5 * (bad[:, 0] + bad[:, 1])
        pending = np.concatenate(
            [np.stack([bad[:, 0], bmid], axis=1), np.stack([bmid, bad[:, 1]], axis=1)]
        )
        depth += 1
    for panels in accepted:
        knots.append(panels[:, 1])
    return np.unique(np.concatenate(knots))


def cumulative(func, knots: np.ndarray, anchor_index: int, order: int = 10) -> np.ndarray:
    """Cumulative integral of ``func`` over ``knots``, zero at ``knots[anchor_index]``."""
    pieces = gl_panels(func, knots, order)
    out = np.zeros(len(knots))
    # accumulate outward from the anchor so values near it carry no cancellation
    out[anchor_index + 1:] = np.cumsum(pieces[anchor_index:])
    if anchor_index > 0:
        out[:anchor_index] = -np.cumsum(pieces[:anchor_index][::-1])[::-1]
    return out
