"""NumPy reference kernels for the infinity-Laplacian sweeps.

Arithmetic is written in the same order as the compiled kernels so both
backends produce bit-identical fields.
"""

from __future__ import annotations

import numpy as np

FD_DIRECT = 0
MONOTONE = 1

# (dy, dx) for half of the 16-point stencil; the other half are the negatives
HALF_STENCIL = ((0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (2, 1), (2, -1), (1, -2))
STENCIL = HALF_STENCIL + tuple((-a, -b) for a, b in HALF_STENCIL)


def _shift(v, dy, dx):
    ny, nx = v.shape
    return v[2 + dy:ny - 2 + dy, 2 + dx:nx - 2 + dx]


def _gradient2(v, h):
    c = _shift
    vx = (c(v, 0, 1) - c(v, 0, -1)) / (2 * h)
    vy = (c(v, 1, 0) - c(v, -1, 0)) / (2 * h)
    return vx, vy, vx * vx + vy * vy


def _operator(v, h, scheme):
    """Discrete infinity-Laplacian on the inner block ``v[2:-2, 2:-2]``."""
    c = _shift
    vx, vy, g2 = _gradient2(v, h)
    if scheme == FD_DIRECT:
        vxx = (c(v, 0, 1) - 2 * c(v, 0, 0) + c(v, 0, -1)) / (h * h)
        vyy = (c(v, 1, 0) - 2 * c(v, 0, 0) + c(v, -1, 0)) / (h * h)
        vxy = (c(v, 1, 1) - c(v, 1, -1) - c(v, -1, 1) + c(v, -1, -1)) / (4 * h * h)
        return vx * vx * vxx + 2 * vx * vy * vxy + vy * vy * vyy, g2
    v0 = c(v, 0, 0)
    radii = np.array([h * np.sqrt(a * a + b * b) for a, b in STENCIL])
    slopes = np.stack([(c(v, a, b) - v0) / radii[k] for k, (a, b) in enumerate(STENCIL)])
    kp = np.argmax(slopes, axis=0)
    km = np.argmin(slopes, axis=0)
    smax = np.take_along_axis(slopes, kp[None], 0)[0]
    smin = np.take_along_axis(slopes, km[None], 0)[0]
    S = (smax + smin) / ((radii[kp] + radii[km]) * 0.5)
    return g2 * S, g2


def _check(v, mask):
    if v.ndim != 2 or v.shape != mask.shape:
        raise ValueError("field and mask must be 2-D arrays of equal shape")
    if v.shape[0] < 5 or v.shape[1] < 5:
        raise ValueError("grid too small for the stencil margin")
    if np.any(mask[:2]) or np.any(mask[-2:]) or np.any(mask[:, :2]) or np.any(mask[:, -2:]):
        raise ValueError("interior nodes need a two-cell margin")


def inf_laplacian(v, mask, h, scheme=FD_DIRECT):
    """Discrete operator at the nodes of ``mask`` (zero elsewhere)."""
    v = np.ascontiguousarray(v, dtype=float)
    mask = np.ascontiguousarray(mask, dtype=bool)
    _check(v, mask)
    out = np.zeros_like(v)
    L, _ = _operator(v, h, scheme)
    inner = mask[2:-2, 2:-2]
    out[2:-2, 2:-2][inner] = L[inner]
    return out


def relax(v, mask, h0, h, cfl, scheme, count):
    """``count`` Jacobi sweeps of ``v <- v + tau (L_h v - h0)``; returns the new field and last ``tau``."""
    v = np.array(v, dtype=float, order="C")
    mask = np.ascontiguousarray(mask, dtype=bool)
    h0 = np.ascontiguousarray(h0, dtype=float)
    _check(v, mask)
    inner = mask[2:-2, 2:-2]
    h0i = h0[2:-2, 2:-2]
    tau = 0.0
    for _ in range(count):
        L, g2 = _operator(v, h, scheme)
        gmax = float(np.max(g2[inner], initial=0.0))
        tau = cfl * h * h / (gmax + 1e-8)
        new = v[2:-2, 2:-2] + tau * (L - h0i)
        block = v[2:-2, 2:-2]
        block[inner] = new[inner]
    return v, tau
