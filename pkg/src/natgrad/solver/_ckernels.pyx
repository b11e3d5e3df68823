# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sweeps for the infinity-Laplacian; same arithmetic order as _pykernels."""

import numpy as np
from libc.math cimport sqrt

cdef enum:
    NDIR = 16

cdef int DY[NDIR]
cdef int DX[NDIR]
_half = ((0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (2, 1), (2, -1), (1, -2))
for _k, (_a, _b) in enumerate(_half + tuple((-a, -b) for a, b in _half)):
    DY[_k] = _a
    DX[_k] = _b


cdef inline double _grad2(const double[:, ::1] v, Py_ssize_t i, Py_ssize_t j, double h,
                          double* vx, double* vy) noexcept nogil:
    vx[0] = (v[i, j + 1] - v[i, j - 1]) / (2 * h)
    vy[0] = (v[i + 1, j] - v[i - 1, j]) / (2 * h)
    return vx[0] * vx[0] + vy[0] * vy[0]


cdef inline double _op(const double[:, ::1] v, Py_ssize_t i, Py_ssize_t j, double h, int scheme,
                       const double* radii, double* g2out) noexcept nogil:
    cdef double vx, vy, g2, vxx, vyy, vxy, v0, s, smax, smin
    cdef int k, kp = 0, km = 0
    g2 = _grad2(v, i, j, h, &vx, &vy)
    g2out[0] = g2
    if scheme == 0:
        vxx = (v[i, j + 1] - 2 * v[i, j] + v[i, j - 1]) / (h * h)
        vyy = (v[i + 1, j] - 2 * v[i, j] + v[i - 1, j]) / (h * h)
        vxy = (v[i + 1, j + 1] - v[i + 1, j - 1] - v[i - 1, j + 1] + v[i - 1, j - 1]) / (4 * h * h)
        return vx * vx * vxx + 2 * vx * vy * vxy + vy * vy * vyy
    v0 = v[i, j]
    smax = (v[i + DY[0], j + DX[0]] - v0) / radii[0]
    smin = smax
    for k in range(1, NDIR):
        s = (v[i + DY[k], j + DX[k]] - v0) / radii[k]
        if s > smax:
            smax = s
            kp = k
        if s < smin:
            smin = s
            km = k
    return g2 * ((smax + smin) / ((radii[kp] + radii[km]) * 0.5))


cdef void _radii(double h, double* radii) noexcept:
    cdef int k
    for k in range(NDIR):
        radii[k] = h * sqrt(<double>(DY[k] * DY[k] + DX[k] * DX[k]))


def _check(v, mask):
    if v.ndim != 2 or v.shape != mask.shape:
        raise ValueError("field and mask must be 2-D arrays of equal shape")
    if v.shape[0] < 5 or v.shape[1] < 5:
        raise ValueError("grid too small for the stencil margin")
    if np.any(mask[:2]) or np.any(mask[-2:]) or np.any(mask[:, :2]) or np.any(mask[:, -2:]):
        raise ValueError("interior nodes need a two-cell margin")


def inf_laplacian(v, mask, double h, int scheme=0):
    v = np.ascontiguousarray(v, dtype=np.float64)
    m8 = np.ascontiguousarray(mask, dtype=np.uint8)
    _check(v, m8)
    out = np.zeros_like(v)
    cdef const double[:, ::1] V = v
    cdef const unsigned char[:, ::1] M = m8
    cdef double[:, ::1] O = out
    cdef double radii[NDIR]
    cdef double g2
    cdef Py_ssize_t i, j
    _radii(h, radii)
    with nogil:
        for i in range(2, V.shape[0] - 2):
            for j in range(2, V.shape[1] - 2):
                if M[i, j]:
                    O[i, j] = _op(V, i, j, h, scheme, radii, &g2)
    return out


def relax(v, mask, h0, double h, double cfl, int scheme, long count):
    a = np.array(v, dtype=np.float64, order="C")
    b = a.copy()
    m8 = np.ascontiguousarray(mask, dtype=np.uint8)
    h0 = np.ascontiguousarray(h0, dtype=np.float64)
    _check(a, m8)
    cdef double[:, ::1] cur = a
    cdef double[:, ::1] nxt = b
    cdef double[:, ::1] tmp
    cdef const unsigned char[:, ::1] M = m8
    cdef const double[:, ::1] H0 = h0
    cdef double radii[NDIR]
    cdef double g2, gmax, tau = 0.0, L, vx, vy
    cdef Py_ssize_t i, j, ny = a.shape[0], nx = a.shape[1]
    cdef long it
    _radii(h, radii)
    with nogil:
        for it in range(count):
            gmax = 0.0
            for i in range(2, ny - 2):
                for j in range(2, nx - 2):
                    if M[i, j]:
                        g2 = _grad2(cur, i, j, h, &vx, &vy)
                        if g2 > gmax:
                            gmax = g2
            tau = cfl * h * h / (gmax + 1e-8)
            for i in range(ny):
                for j in range(nx):
                    if M[i, j]:
                        L = _op(cur, i, j, h, scheme, radii, &g2)
                        nxt[i, j] = cur[i, j] + tau * (L - H0[i, j])
                    else:
                        nxt[i, j] = cur[i, j]
            tmp = cur
            cur = nxt
            nxt = tmp
    return (a if count % 2 == 0 else b), tau
