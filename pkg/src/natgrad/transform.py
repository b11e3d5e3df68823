"""The change of variables ``Phi_g(t) = int_0^t exp(G(s)) ds`` with ``G(s) = int_0^s g``.

:func:`build_table` realises ``G`` and ``Phi_g`` on a finite working interval.
Knots come from adaptive Simpson refinement (first of ``g``, then of
``exp(G)``); on every panel both functions are stored as Chebyshev
interpolants whose nodal values are computed by Gauss-Legendre quadrature
from the panel's left knot. The inverse is a bracketed Newton iteration
seeded by a monotone cubic (PCHIP) fit of the knot table.

Nothing is extrapolated: arguments outside the table raise :class:`RangeError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.interpolate import PchipInterpolator

from . import expr as E
from .quadrature import QuadratureError, adaptive_simpson_mesh, cumulative, gauss_legendre

CHEB_DEGREE = 16
SIGN_TOL = 1e-12


class TransformError(ValueError):
    """Configuration or construction failure of a transform table."""


class RangeError(ValueError):
    """Argument outside the realised range of a table."""

    def __init__(self, message: str, index=None):
        self.index = index
        super().__init__(message if index is None else f"{message} (sample index {index})")


@dataclass(frozen=True)
class GSpec:
    """The coefficient ``g(t)`` plus its declared sign-change threshold ``s0``.

    With ``positive_only`` only ``g >= 0`` on ``[0, s0 + t_check]`` is required,
    which is enough for nonnegative solutions.
    """

    g: E.Expr
    s0: float = 0.0
    t_check: float = 50.0
    positive_only: bool = False

    @classmethod
    def from_string(cls, source: str, s0: float = 0.0, **kw) -> "GSpec":
        return cls(E.parse(source), float(s0), **kw)

    def __post_init__(self):
        if isinstance(self.g, str):
            object.__setattr__(self, "g", E.parse(self.g))
        bad = E.free_vars(self.g) - {"t"}
        if bad:
            raise TransformError(f"g may only depend on t, found {sorted(bad)}")
        if self.s0 < 0:
            raise TransformError("s0 must be nonnegative")

    def __call__(self, t):
        return _eval_t(self.g, t)

    @property
    def is_zero(self) -> bool:
        return isinstance(self.g, E.Num) and self.g.value == 0.0

    def check_sign(self) -> None:
        """Spot-check the sign condition on 10^4-point grids; raise on violation."""
        if self.positive_only:
            grids = [(np.linspace(0.0, self.s0 + self.t_check, 10_000), 1.0)]
        else:
            grids = [
                (np.linspace(self.s0, self.s0 + self.t_check, 10_000), 1.0),
                (np.linspace(-self.s0 - self.t_check, -self.s0, 10_000), -1.0),
            ]
        for grid, sign in grids:
            vals = sign * self(grid)
            i = int(np.argmin(vals))
            if vals[i] < -SIGN_TOL:
                side = "g >= 0" if sign > 0 else "g <= 0"
                raise TransformError(
                    f"sign condition {side} violated at t={grid[i]!r} (g={self(grid[i])!r}) for s0={self.s0}"
                )


def _eval_t(e: E.Expr, t):
    t = np.asarray(t, dtype=float)
    try:
        out = E.evaluate(e, {"t": t})
    except E.EvalError as exc:
        raise TransformError(f"cannot evaluate g: {exc}") from None
    return np.broadcast_to(out, t.shape).astype(float) if t.ndim else float(out)


# ---------------------------------------------------------------------------
# piecewise Chebyshev storage
# ---------------------------------------------------------------------------

_LOBATTO = np.cos(np.pi * np.arange(CHEB_DEGREE + 1) / CHEB_DEGREE)[::-1]
_VANDER_INV = np.linalg.inv(C.chebvander(_LOBATTO, CHEB_DEGREE))


class _PiecewiseCheb:
    def __init__(self, knots: np.ndarray, nodal: np.ndarray):
        self.knots = knots
        self.coef = nodal @ _VANDER_INV.T  # (panels, degree+1)
        self.dcoef = C.chebder(self.coef.T).T * (2.0 / np.diff(knots))[:, None]

    def _locate(self, t: np.ndarray):
        i = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, len(self.knots) - 2)
        a, b = self.knots[i], self.knots[i + 1]
        return i, (2.0 * t - a - b) / (b - a)

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return self._eval(self.coef, t)

    def derivative(self, t: np.ndarray) -> np.ndarray:
        return self._eval(self.dcoef, t)

    def _eval(self, coef: np.ndarray, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        i, x = self._locate(t.ravel())
        c = coef[i]
        # Clenshaw recurrence, one row of coefficients per point
        b1 = np.zeros_like(x)
        b2 = np.zeros_like(x)
        x2 = 2.0 * x
        for k in range(c.shape[1] - 1, 0, -1):
            b1, b2 = c[:, k] + x2 * b1 - b2, b1
        return (c[:, 0] + x * b1 - b2).reshape(t.shape)


def _panel_nodes(knots: np.ndarray) -> np.ndarray:
    a, b = knots[:-1, None], knots[1:, None]
    return 0.5 * (a + b) + 0.5 * (b - a) * _LOBATTO[None, :]


def _integrate_from_left(func, knots: np.ndarray, left_values: np.ndarray, order: int = 12):
    """Values of ``left_values[i] + int_{knots[i]}^{y} func`` at each panel's Lobatto nodes."""
    xg, wg = gauss_legendre(order)
    nodes = _panel_nodes(knots)  # (P, D)
    a = knots[:-1, None]
    half = 0.5 * (nodes - a)  # (P, D)
    pts = (a + half)[..., None] + half[..., None] * xg  # (P, D, order)
    vals = np.asarray(func(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite integrand value")
    return left_values[:, None] + half * (vals @ wg)


def _with_zero(a: float, b: float, mesh_fn) -> np.ndarray:
    left = mesh_fn(a, 0.0)
    right = mesh_fn(0.0, b)
    return np.unique(np.concatenate([left, right]))


# ---------------------------------------------------------------------------
# the table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformTable:
    g_spec: GSpec
    t_min: float
    t_max: float
    quad_tol: float
    knots: np.ndarray
    G_values: np.ndarray
    Phi_values: np.ndarray
    _G: _PiecewiseCheb = field(repr=False)
    _Phi: _PiecewiseCheb = field(repr=False)
    _inv_guess: PchipInterpolator = field(repr=False)

    @property
    def phi_min(self) -> float:
        return float(self.Phi_values[0])

    @property
    def phi_max(self) -> float:
        return float(self.Phi_values[-1])

    def _check_t(self, t: np.ndarray) -> None:
        bad = (t < self.t_min) | (t > self.t_max) | ~np.isfinite(t)
        if np.any(bad):
            idx = int(np.argmax(bad.ravel())) if t.ndim else None
            raise RangeError(
                f"t={float(t.ravel()[idx] if t.ndim else t)!r} outside table range [{self.t_min}, {self.t_max}]",
                idx,
            )

    def G(self, t):
        t = np.asarray(t, dtype=float)
        self._check_t(t)
        return _scalar_or(np.where(t == 0.0, 0.0, self._G(t)), t)

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        self._check_t(t)
        out = self._Phi(t)
        out = np.where(t == 0.0, 0.0, out)
        return _scalar_or(out, t)

    def phi_prime(self, t):
        """``Phi'(t) = exp(G(t))``."""
        return np.exp(self.G(t))

    def phi_second(self, t):
        """``Phi''(t)`` from the differentiated interpolant of ``G`` (independent of ``g``)."""
        t = np.asarray(t, dtype=float)
        self._check_t(t)
        return _scalar_or(self._G.derivative(t) * np.exp(self._G(t)), t)

    def phi_inv(self, s, tol: float = 1e-12, max_iter: int = 100):
        """Inverse of ``phi`` by bracketed Newton with bisection fallback."""
        s = np.asarray(s, dtype=float)
        # phi() evaluates the interpolant, which may land a few ulps past the stored end values
        slack = 8 * np.finfo(float).eps * max(abs(self.phi_min), abs(self.phi_max))
        bad = (s < self.phi_min - slack) | (s > self.phi_max + slack) | ~np.isfinite(s)
        if np.any(bad):
            idx = int(np.argmax(bad.ravel())) if s.ndim else None
            raise RangeError(
                f"s={float(s.ravel()[idx] if s.ndim else s)!r} outside realised range "
                f"[{self.phi_min!r}, {self.phi_max!r}]",
                idx,
            )
        flat = np.clip(s.ravel(), self.phi_min, self.phi_max)
        j = np.clip(np.searchsorted(self.Phi_values, flat, side="right") - 1, 0, len(self.knots) - 2)
        lo = self.knots[j].copy()
        hi = self.knots[j + 1].copy()
        t = np.clip(self._inv_guess(flat), lo, hi)
        active = np.ones(flat.shape, dtype=bool)
        for _ in range(max_iter):
            if not active.any():
                break
            ta = t[active]
            r = self._Phi(ta) - flat[active]
            d = np.exp(self._G(ta))
            lo_a, hi_a = lo[active], hi[active]
            lo_a = np.where(r < 0, ta, lo_a)
            hi_a = np.where(r > 0, ta, hi_a)
            step = r / d
            nt = ta - step
            outside = (nt <= lo_a) | (nt >= hi_a)
            nt = np.where(outside, 0.5 * (lo_a + hi_a), nt)
            done = (np.abs(nt - ta) <= tol * (1 + np.abs(ta))) | (r == 0)
            t[active] = np.where(r == 0, ta, nt)
            lo[active], hi[active] = lo_a, hi_a
            idx = np.flatnonzero(active)
            active[idx[done]] = False
        t = np.where(flat == 0.0, 0.0, t)
        return _scalar_or(t.reshape(s.shape), s)

    # ---- solution fields ------------------------------------------------

    def push_solution(self, u_values):
        """``v = Phi_g(u)`` pointwise."""
        return self.phi(u_values)

    def pull_solution(self, v_values):
        """``u = Phi_g^{-1}(v)`` pointwise."""
        return self.phi_inv(v_values)

    # ---- export ----------------------------------------------------------

    def to_csv(self) -> str:
        from .io import csv_text

        return csv_text(
            ["t", "G", "Phi", "Phi_prime"],
            [self.knots, self.G_values, self.Phi_values, np.exp(self.G_values)],
        )


def _scalar_or(out, like):
    like = np.asarray(like)
    return float(out) if like.ndim == 0 else np.asarray(out, dtype=float).reshape(like.shape)


def build_table(
    g_spec: GSpec,
    t_min: float = -50.0,
    t_max: float = 50.0,
    quad_tol: float = 1e-10,
    check_sign: bool = True,
) -> TransformTable:
    if not t_min < 0 < t_max:
        raise TransformError(f"need t_min < 0 < t_max, got [{t_min}, {t_max}]")
    if quad_tol <= 0:
        raise TransformError("quad_tol must be positive")
    if check_sign:
        g_spec.check_sign()
    g = g_spec

    try:
        knots = _with_zero(t_min, t_max, lambda a, b: adaptive_simpson_mesh(g, a, b, quad_tol))
        zero = int(np.searchsorted(knots, 0.0))
        G_interp = _fit_G(g, knots, zero)
        # refine again for the integrand of Phi
        expG = lambda t: np.exp(G_interp(t))
        knots2 = _with_zero(t_min, t_max, lambda a, b: adaptive_simpson_mesh(expG, a, b, quad_tol))
        knots = np.unique(np.concatenate([knots, knots2]))
        zero = int(np.searchsorted(knots, 0.0))
        G_interp = _fit_G(g, knots, zero)
        expG = lambda t: np.exp(G_interp(t))
        phi_knots = cumulative(expG, knots, zero, order=12)
        phi_nodal = _integrate_from_left(expG, knots, phi_knots[:-1])
        Phi_interp = _PiecewiseCheb(knots, phi_nodal)
    except QuadratureError as exc:
        raise TransformError(f"quadrature failed: {exc}") from None

    G_values = G_interp(knots)
    G_values[zero] = 0.0
    phi_knots[zero] = 0.0
    if not np.all(np.diff(phi_knots) > 0):
        raise TransformError(
            "Phi is not strictly increasing in floating point on the knot table "
            "(exp(G) underflows relative to Phi); shrink [t_min, t_max]"
        )
    return TransformTable(
        g_spec=g_spec,
        t_min=float(t_min),
        t_max=float(t_max),
        quad_tol=float(quad_tol),
        knots=knots,
        G_values=G_values,
        Phi_values=phi_knots,
        _G=G_interp,
        _Phi=Phi_interp,
        _inv_guess=PchipInterpolator(phi_knots, knots, extrapolate=True),
    )


def _fit_G(g, knots: np.ndarray, zero: int) -> _PiecewiseCheb:
    G_knots = cumulative(g, knots, zero, order=12)
    return _PiecewiseCheb(knots, _integrate_from_left(g, knots, G_knots[:-1]))


# ---------------------------------------------------------------------------
# transformed reaction term
# ---------------------------------------------------------------------------


def _x_bindings(x, n: int) -> dict:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"points must have trailing dimension {n}, got {x.shape}")
    return {f"x{i + 1}": x[..., i] for i in range(n)}


@dataclass(frozen=True)
class TransformedReaction:
    """``h(x, s) = exp(w G(Phi^{-1}(s))) f(x, Phi^{-1}(s))`` with ``w = alpha + beta + 1``."""

    table: TransformTable
    f: E.Expr
    weight: float
    n: int = 2

    def __call__(self, x, s):
        s = np.asarray(s, dtype=float)
        w = self.table.phi_inv(s)
        env = _x_bindings(x, self.n)
        env["t"] = w
        fx = E.evaluate(self.f, env)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.exp(self.weight * self.table.G(w)) * fx
        return out

    def h0(self, x, s):
        """``h0 = -h``, the right-hand side of ``Delta_inf v = h0(x, v)``."""
        return -self(x, s)


def build_h(tbl: TransformTable, f, op) -> TransformedReaction:
    f = E.parse(f) if isinstance(f, str) else f
    return TransformedReaction(tbl, f, float(op.weight), op.n)
