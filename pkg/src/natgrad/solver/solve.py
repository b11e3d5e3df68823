"""Dirichlet problem ``Delta_inf u + g(u)|Du|^4 + f(x, u) = 0`` on 2-D grids.

The gradient term is removed by ``v = Phi_g(u)``; the gradient-free problem
``Delta_inf v = h0(x, v)`` is relaxed in pseudo-time and the result pulled
back through ``Phi_g^{-1}``. The scheme is a heuristic: exact-solution tests
justify it, nothing here proves convergence to the viscosity solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import expr as E
from ..io import csv_text, pgm_bytes
from ..operators import OperatorSpec
from ..transform import GSpec, RangeError, TransformTable, build_h, build_table
from . import kernels
from .domain import Domain2D

MARGIN = 2
CFL = 0.2
STALL_CHECKS = 200


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    domain: Domain2D
    h: float
    xs: np.ndarray
    ys: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    mask: np.ndarray  # interior nodes

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape


def build_grid(domain: Domain2D, h: float) -> Grid:
    """Bounding-box grid plus a two-cell margin; interior nodes have signed distance < -h/2."""
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    x0, y0, x1, y1 = domain.bbox
    nx = int(np.ceil((x1 - x0) / h - 1e-9))
    ny = int(np.ceil((y1 - y0) / h - 1e-9))
    xs = x0 + (np.arange(nx + 1 + 2 * MARGIN) - MARGIN) * h
    ys = y0 + (np.arange(ny + 1 + 2 * MARGIN) - MARGIN) * h
    X, Y = np.meshgrid(xs, ys)
    mask = domain.signed_distance(X, Y) < -h / 2
    if not mask.any():
        raise ValueError(f"grid spacing {h} leaves no interior nodes in {domain.describe()}")
    return Grid(domain, float(h), xs, ys, X, Y, mask)


@dataclass(frozen=True)
class GridProblem:
    domain: Domain2D
    h_grid: float
    b: E.Expr
    f: E.Expr
    g_spec: GSpec
    scheme: str = "fd-direct"
    tol_solver: float = 1e-7
    max_iters: int = 500_000
    check_every: int = 50
    t_min: float | None = None
    t_max: float | None = None
    quad_tol: float = 1e-10

    def __post_init__(self):
        for name in ("b", "f"):
            val = getattr(self, name)
            if isinstance(val, str):
                object.__setattr__(self, name, E.parse(val))
        if isinstance(self.g_spec, str):
            object.__setattr__(self, "g_spec", GSpec.from_string(self.g_spec))
        if self.scheme not in kernels.SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {sorted(kernels.SCHEMES)}")
        bad = E.free_vars(self.b) - {"x1", "x2"}
        if bad:
            raise ValueError(f"b may only depend on x1, x2, found {sorted(bad)}")
        bad = E.free_vars(self.f) - {"x1", "x2", "t"}
        if bad:
            raise ValueError(f"f may only depend on x1, x2, t, found {sorted(bad)}")
        if self.tol_solver <= 0 or self.max_iters < 1 or self.check_every < 1:
            raise ValueError("need tol_solver > 0, max_iters >= 1, check_every >= 1")


@dataclass
class SolveResult:
    grid: Grid
    v_grid: np.ndarray
    u_grid: np.ndarray
    residual_inf: float
    iters: int
    converged: bool
    backend: str = kernels.BACKEND
    history: list = field(default_factory=list)

    def interior(self, values: np.ndarray) -> np.ndarray:
        return values[self.grid.mask]

    def to_csv(self) -> str:
        m = self.grid.mask
        return csv_text(["x", "y", "v", "u"], [self.grid.X[m], self.grid.Y[m], self.v_grid[m], self.u_grid[m]])

    def to_pgm(self, which: str = "u") -> bytes:
        vals = self.u_grid if which == "u" else self.v_grid
        return pgm_bytes(np.where(self.grid.mask, vals, np.nan))


def _eval_xy(e: E.Expr, X, Y, **extra):
    env = {"x1": X, "x2": Y, **extra}
    return np.broadcast_to(E.evaluate(e, env), np.shape(X)).astype(float)


def _laplace_init(grid: Grid, boundary: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension of the ghost values (5-point stencil, direct solve)."""
    mask = grid.mask
    idx = -np.ones(mask.shape, dtype=np.int64)
    ii, jj = np.nonzero(mask)
    idx[ii, jj] = np.arange(len(ii))
    n = len(ii)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, 4.0)]
    rhs = np.zeros(n)
    for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        ni, nj = ii + di, jj + dj
        nb = idx[ni, nj]
        inside = nb >= 0
        rows.append(np.nonzero(inside)[0])
        cols.append(nb[inside])
        vals.append(np.full(int(inside.sum()), -1.0))
        rhs[~inside] += boundary[ni[~inside], nj[~inside]]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    out = boundary.copy()
    out[ii, jj] = spla.spsolve(A.tocsc(), rhs)
    return out


def solve_transformed(grid: Grid, boundary, h0, scheme: str = "fd-direct", tol: float = 1e-7,
                      max_iters: int = 500_000, check_every: int = 50) -> SolveResult:
    """Relax ``Delta_inf v = h0(x, v)`` with ``v = boundary`` off the interior.

    ``boundary(x, y)`` is evaluated at the closest boundary point of every
    non-interior node. ``h0`` is a constant, or a callable ``h0(X, Y, v)`` on
    interior coordinates; a callable is refreshed every ``check_every`` sweeps.
    """
    mask = grid.mask
    code = kernels.SCHEMES[scheme]
    px, py = grid.domain.project(grid.X, grid.Y)
    ghost = np.asarray(boundary(px, py), dtype=float)
    ghost = np.broadcast_to(ghost, grid.shape).copy()
    if not np.all(np.isfinite(ghost[~mask])):
        raise SolverError("boundary data is not finite")
    v = _laplace_init(grid, np.where(mask, 0.0, ghost))

    Xi, Yi = grid.X[mask], grid.Y[mask]

    def rhs(v):
        out = np.zeros(grid.shape)
        out[mask] = h0(Xi, Yi, v[mask]) if callable(h0) else h0
        return out

    H0 = rhs(v)
    history = []
    iters = 0
    residual = np.inf
    best, since_best = np.inf, 0
    while True:
        res = kernels.inf_laplacian(v, mask, grid.h, code) - H0
        residual = float(np.max(np.abs(res[mask])))
        history.append((iters, residual))
        if not np.isfinite(residual):
            break
        if residual <= tol or iters >= max_iters:
            break
        # a switching stencil can cycle without ever reducing the residual
        if residual < 0.99 * best:
            best, since_best = residual, 0
        else:
            since_best += 1
            if since_best >= STALL_CHECKS:
                break
        count = min(check_every, max_iters - iters)
        v, _ = kernels.relax(v, mask, H0, grid.h, CFL, code, count)
        iters += count
        if callable(h0):
            H0 = rhs(v)
    converged = bool(residual <= tol)
    return SolveResult(grid, v, v.copy(), residual, iters, converged, kernels.BACKEND, history)


class _Identity:
    """Stand-in for the transform when ``g = 0``: exact identity, no table error."""

    def phi(self, t):
        return np.asarray(t, dtype=float)

    phi_inv = pull_solution = push_solution = phi


def default_table(p: GridProblem) -> TransformTable:
    """Table covering the boundary data with generous margin on both sides of 0."""
    xb, yb, _ = p.domain.boundary_samples(512)
    bv = _eval_xy(p.b, xb, yb)
    lo, hi = min(float(bv.min()), 0.0), max(float(bv.max()), 0.0)
    pad = 1.0 + 0.5 * (hi - lo)
    t_min = p.t_min if p.t_min is not None else lo - pad
    t_max = p.t_max if p.t_max is not None else hi + pad
    return build_table(p.g_spec, t_min, t_max, p.quad_tol)


def solve_with_gradient_term(p: GridProblem, table: TransformTable | None = None) -> SolveResult:
    """Full pipeline: ``b~ = Phi_g(b)``, ``h0 = -h`` from the transformed reaction, relax, pull back."""
    grid = build_grid(p.domain, p.h_grid)
    op = OperatorSpec("infinity_laplace", 2)
    if p.g_spec.is_zero and table is None:
        tbl = _Identity()
        boundary = lambda x, y: _eval_xy(p.b, x, y)
        if "t" in E.free_vars(p.f):
            h0 = lambda X, Y, v: -_eval_xy(p.f, X, Y, t=v)
        else:
            h0 = -_eval_xy(p.f, grid.X, grid.Y)[grid.mask]
    else:
        tbl = table if table is not None else default_table(p)
        h = build_h(tbl, p.f, op)
        boundary = lambda x, y: tbl.phi(_eval_xy(p.b, x, y))
        h0 = lambda X, Y, v: h.h0(np.stack([X, Y], axis=-1), v)
    try:
        res = solve_transformed(grid, boundary, h0, p.scheme, p.tol_solver, p.max_iters, p.check_every)
        res.u_grid = np.asarray(tbl.pull_solution(res.v_grid), dtype=float)
    except RangeError as exc:
        raise SolverError(f"transform table range exceeded: {exc}") from None
    return res


def discrete_inf_laplacian(values: np.ndarray, node: tuple, h: float, scheme: str = "fd-direct") -> float:
    """Scheme value at one node; the node needs a full stencil of finite values."""
    values = np.asarray(values, dtype=float)
    i, j = node
    reach = 1 if scheme == "fd-direct" else 2
    ny, nx = values.shape
    if not (reach <= i < ny - reach and reach <= j < nx - reach):
        raise ValueError(f"node {node} lacks a full stencil")
    if not np.all(np.isfinite(values[i - reach:i + reach + 1, j - reach:j + reach + 1])):
        raise ValueError(f"node {node} has undefined stencil values")
    # embed the stencil patch in a padded block so the kernels' margin rule holds
    patch = np.zeros((2 * reach + 5, 2 * reach + 5))
    patch[2:-2, 2:-2] = values[i - reach:i + reach + 1, j - reach:j + reach + 1]
    c = reach + 2
    mask = np.zeros(patch.shape, dtype=bool)
    mask[c, c] = True
    return float(kernels.inf_laplacian(patch, mask, h, kernels.SCHEMES[scheme])[c, c])
