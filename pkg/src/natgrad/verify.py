"""Residual-level checks of the gradient-term invariance on manufactured solutions.

All jets are symbolic: ``Du`` and ``D^2u`` come from :func:`natgrad.expr.differentiate`,
so the residuals below measure the identities themselves and the accuracy of
the transform table, not a discretisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from . import operators as ops
from .io import fmt
from .linalg import tensor
from .transform import GSpec, TransformTable, build_table

DEFAULT_TOL = 1e-8


class VerificationError(ValueError):
    pass


@dataclass(frozen=True)
class ManufacturedSolution:
    u: E.Expr
    n: int
    Du: tuple
    D2u: tuple

    @classmethod
    def from_expr(cls, u, n: int = 2) -> "ManufacturedSolution":
        u = E.parse(u) if isinstance(u, str) else u
        names = [f"x{i + 1}" for i in range(n)]
        extra = E.free_vars(u) - set(names)
        if extra:
            raise VerificationError(f"u may only depend on {names}, found {sorted(extra)}")
        Du = tuple(E.differentiate(u, v) for v in names)
        rows = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                rows[i][j] = rows[j][i] = E.differentiate(Du[i], names[j])
        return cls(u, n, Du, tuple(tuple(r) for r in rows))

    def _bind(self, points: np.ndarray) -> dict:
        return {f"x{i + 1}": points[:, i] for i in range(self.n)}

    def jets(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values ``(u, Du, D^2u)`` at ``points`` of shape ``(m, n)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        m = points.shape[0]
        env = self._bind(points)
        ev = lambda e: np.broadcast_to(E.evaluate(e, env), (m,))
        u = ev(self.u).copy()
        p = np.stack([ev(d) for d in self.Du], axis=1)
        X = np.empty((m, self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                X[:, i, j] = ev(self.D2u[i][j])
        return u, p, X


def _M(op, x, p, X):
    return ops.eval_M(op, ops.Jet(x, p, X))


def _N(op, x, p, X):
    return ops.eval_N(op, ops.Jet(x, p, X))


def chain_rule_check(op: ops.OperatorSpec, phi, u: ManufacturedSolution, points) -> float:
    """Largest normalised residual of the chain-rule identity

    ``M(DPhi(u), D^2Phi(u)) = Phi'^w M(Du, D^2u) + Phi'^(w-1) Phi'' N(Du, D^2u)``

    with ``w = alpha + beta + 1`` and ``phi`` an expression in ``t``.
    """
    phi = E.parse(phi) if isinstance(phi, str) else phi
    d1 = E.differentiate(phi, "t")
    d2 = E.differentiate(d1, "t")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    uv, P, XX = u.jets(points)
    a = np.broadcast_to(E.evaluate(d1, {"t": uv}), uv.shape)
    b = np.broadcast_to(E.evaluate(d2, {"t": uv}), uv.shape)
    if np.any(a <= 0):
        i = int(np.argmin(a))
        raise VerificationError(f"phi' = {a[i]!r} <= 0 at u = {uv[i]!r}")
    w = op.weight
    worst = 0.0
    for k in range(len(uv)):
        x, p, X = points[k], P[k], XX[k]
        lhs = _M(op, x, a[k] * p, a[k] * X + b[k] * tensor(p, p))
        t1 = a[k] ** w * _M(op, x, p, X)
        t2 = a[k] ** (w - 1) * b[k] * _N(op, x, p, X)
        worst = max(worst, abs(lhs - t1 - t2) / (1 + abs(lhs) + abs(t1) + abs(t2)))
    return worst


@dataclass
class InvarianceReport:
    operator: str
    g: str
    direction: str
    points: np.ndarray
    residual_forward: np.ndarray
    residual_backward: np.ndarray
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(
            np.all(self.residual_forward <= self.tol) and np.all(self.residual_backward <= self.tol)
        )

    @property
    def max_forward(self) -> float:
        return float(np.max(self.residual_forward, initial=0.0))

    @property
    def max_backward(self) -> float:
        return float(np.max(self.residual_backward, initial=0.0))

    def to_text(self) -> str:
        lines = [f"# invariance {self.direction} operator={self.operator} g={self.g} tol={fmt(self.tol)}"]
        for x, rf, rb in zip(self.points, self.residual_forward, self.residual_backward):
            ok = rf <= self.tol and rb <= self.tol
            xs = " ".join(fmt(c) for c in x)
            lines.append(f"x={xs} residual_forward={fmt(rf)} residual_backward={fmt(rb)} pass={ok}")
        lines.append(
            f"summary max_forward={fmt(self.max_forward)} max_backward={fmt(self.max_backward)} "
            f"pass={self.passed}"
        )
        return "\n".join(lines) + "\n"


def _table_for(g_spec: GSpec, lo: float, hi: float, table: TransformTable | None) -> TransformTable:
    if table is not None:
        return table
    margin = 1.0 + 0.1 * max(abs(lo), abs(hi))
    return build_table(g_spec, min(-1.0, lo - margin), max(1.0, hi + margin))


def _check_positive(g_spec: GSpec, values: np.ndarray, what: str) -> None:
    if g_spec.positive_only and np.any(values < 0):
        raise VerificationError(f"g declared for nonnegative solutions only, but {what} < 0 at a sample")


def _normalised(*terms) -> float:
    total = sum(terms)
    return abs(total) / (1 + sum(abs(t) for t in terms))


def theorem1_forward(op: ops.OperatorSpec, g_spec: GSpec, u: ManufacturedSolution, points,
                     table: TransformTable | None = None, tol: float = DEFAULT_TOL) -> InvarianceReport:
    """Manufacture ``f`` so that ``u`` solves ``M + g(u) N + f = 0`` and check ``v = Phi_g(u)``
    solves ``M(Dv, D^2v) + h(x, v) = 0``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    uv, P, XX = u.jets(points)
    _check_positive(g_spec, uv, "u")
    tbl = _table_for(g_spec, float(uv.min()), float(uv.max()), table)
    gu = g_spec(uv)
    a = tbl.phi_prime(uv)
    b = tbl.phi_second(uv)
    v = tbl.phi(uv)
    # h(x, s) with the x-only forcing, evaluated through the inverse table
    w_back = tbl.phi_inv(v)
    w = op.weight
    fwd = np.empty(len(uv))
    bwd = np.empty(len(uv))
    for k in range(len(uv)):
        x, p, X = points[k], P[k], XX[k]
        M0 = _M(op, x, p, X)
        N0 = _N(op, x, p, X)
        f = -(M0 + gu[k] * N0)
        bwd[k] = _normalised(M0, gu[k] * N0, f)
        Mv = _M(op, x, a[k] * p, a[k] * X + b[k] * tensor(p, p))
        h = np.exp(w * tbl.G(w_back[k])) * f
        fwd[k] = _normalised(Mv, h)
    return InvarianceReport(op.name, E.to_string(g_spec.g), "forward", points, fwd, bwd, tol)


def theorem1_backward(op: ops.OperatorSpec, g_spec: GSpec, v: ManufacturedSolution, points,
                      table: TransformTable | None = None, tol: float = DEFAULT_TOL) -> InvarianceReport:
    """Manufacture ``h`` so that ``v`` solves ``M + h = 0`` and check ``u = Phi_g^{-1}(v)`` solves
    ``M + g(u) N + f = 0`` with ``f(x, t) = exp(-w G(t)) h(x)``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vv, P, XX = v.jets(points)
    _check_positive(g_spec, vv, "v")
    tbl = table
    if tbl is None:
        # the table must cover Phi^{-1} of the v range; grow until it does
        lo, hi = float(vv.min()), float(vv.max())
        tbl = _table_for(g_spec, lo, hi, None)
        while tbl.phi_min > lo or tbl.phi_max < hi:
            tbl = build_table(g_spec, 2 * tbl.t_min, 2 * tbl.t_max)
    uv = tbl.phi_inv(vv)
    gu = g_spec(uv)
    a = tbl.phi_prime(uv)
    b = tbl.phi_second(uv)
    w = op.weight
    fwd = np.empty(len(vv))
    bwd = np.empty(len(vv))
    for k in range(len(vv)):
        x, q, Y = points[k], P[k], XX[k]
        Mv = _M(op, x, q, Y)
        h = -Mv
        fwd[k] = _normalised(Mv, np.exp(w * tbl.G(uv[k])) * (np.exp(-w * tbl.G(uv[k])) * h))
        # inverse-function jets
        p = q / a[k]
        X = Y / a[k] - b[k] / a[k] ** 3 * tensor(q, q)
        f = np.exp(-w * tbl.G(uv[k])) * h
        bwd[k] = _normalised(_M(op, x, p, X), gu[k] * _N(op, x, p, X), f)
    return InvarianceReport(op.name, E.to_string(g_spec.g), "backward", points, fwd, bwd, tol)


# ---------------------------------------------------------------------------
# Aronsson-type transfer
# ---------------------------------------------------------------------------

ARONSSON = "x1^(4/3)-x2^(4/3)"


@dataclass
class AronssonReport:
    max_residual: float
    max_gradient_mismatch: float


def aronsson_transfer_check(table: TransformTable, points, v=ARONSSON, fd_step: float = 1e-3) -> AronssonReport:
    """For an infinity-harmonic ``v`` check ``u = Phi_g^{-1}(v)`` solves
    ``Delta_inf u + g(u)|Du|^4 = 0`` and that ``Dv = exp(G(u)) Du``.

    The gradient identity uses a fourth-order finite-difference ``Du`` of the
    numerically inverted field, independent of the inverse-function formulas.
    """
    ms = ManufacturedSolution.from_expr(v, 2)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vv, Q, YY = ms.jets(points)
    uv = table.phi_inv(vv)
    a = table.phi_prime(uv)
    b = table.phi_second(uv)
    gu = table.g_spec(uv)
    op = ops.OperatorSpec("infinity_laplace", 2)
    worst = 0.0
    for k in range(len(vv)):
        q, Y = Q[k], YY[k]
        p = q / a[k]
        X = Y / a[k] - b[k] / a[k] ** 3 * tensor(q, q)
        worst = max(worst, _normalised(_M(op, points[k], p, X), gu[k] * float(p @ p) ** 2))

    def u_at(pts):
        return table.phi_inv(np.broadcast_to(E.evaluate(ms.u, {"x1": pts[:, 0], "x2": pts[:, 1]}), (len(pts),)))

    Du = np.zeros_like(Q)
    hh = fd_step
    for i in range(2):
        e = np.zeros(2)
        e[i] = hh
        Du[:, i] = (-u_at(points + 2 * e) + 8 * u_at(points + e) - 8 * u_at(points - e) + u_at(points - 2 * e)) / (12 * hh)
    mismatch = np.max(np.abs(a[:, None] * Du - Q) / (1 + np.abs(Q)))
    return AronssonReport(worst, float(mismatch))


# ---------------------------------------------------------------------------
# grid-scale touching test (heuristic)
# ---------------------------------------------------------------------------


@dataclass
class TouchReport:
    node: tuple
    side: str
    x: np.ndarray
    residual_v: float  # M(D phi, D^2 phi) + h(x0, v0)
    residual_u: float  # transferred: M + g N + f for the pulled-back test function
    factor: float  # Phi'(u0)^w, residual_v == factor * residual_u
    touch_gap: float
    tol: float
    holds_v: bool
    holds_u: bool
    consistency: float


def discrete_jet(values: np.ndarray, node: tuple, spacing: float):
    """Centred first and second differences on the 3x3 stencil (rows = y, columns = x)."""
    i, j = node
    ny, nx = values.shape
    if not (1 <= i < ny - 1 and 1 <= j < nx - 1):
        raise VerificationError(f"node {node} has no full 3x3 stencil")
    S = values[i - 1:i + 2, j - 1:j + 2]
    if not np.all(np.isfinite(S)):
        raise VerificationError(f"node {node} touches undefined grid values")
    h = spacing
    vx = (S[1, 2] - S[1, 0]) / (2 * h)
    vy = (S[2, 1] - S[0, 1]) / (2 * h)
    vxx = (S[1, 2] - 2 * S[1, 1] + S[1, 0]) / h**2
    vyy = (S[2, 1] - 2 * S[1, 1] + S[0, 1]) / h**2
    vxy = (S[2, 2] - S[2, 0] - S[0, 2] + S[0, 0]) / (4 * h**2)
    return S, np.array([vx, vy]), np.array([[vxx, vxy], [vxy, vyy]])


def viscosity_touch_check(op: ops.OperatorSpec, table: TransformTable, values: np.ndarray,
                          h, node: tuple, side: str, origin=(0.0, 0.0), spacing: float = 1.0,
                          tol_visc: float = 1e-8) -> TouchReport:
    """Touch ``values`` at ``node`` with the quadratic of its discrete jet and test the
    viscosity inequality, then transfer the test function through ``Phi_g^{-1}``.

    ``side="above"`` is the subsolution test (``<= tol``), ``"below"`` the
    supersolution test (``>= -tol``). A quadratic on a 3x3 stencil is a proxy
    for the C^2 test class, not the class itself.
    """
    if side not in ("above", "below"):
        raise ValueError("side must be 'above' or 'below'")
    if op.n != 2:
        raise ValueError("touch checks are two-dimensional")
    S, Dphi, D2phi = discrete_jet(values, node, spacing)
    i, j = node
    x0 = np.array([origin[0] + j * spacing, origin[1] + i * spacing])
    v0 = float(S[1, 1])
    offs = np.array([[(dx * spacing, dy * spacing) for dx in (-1, 0, 1)] for dy in (-1, 0, 1)])
    quad = v0 + offs @ Dphi + 0.5 * np.einsum("abi,ij,abj->ab", offs, D2phi, offs)
    diff = S - quad
    # constant shift so the quadratic lies above (below) the stencil values
    gap = float(diff.max()) if side == "above" else float(diff.min())
    w = op.weight
    Fv = _M(op, x0, Dphi, D2phi) + float(h(x0, v0))

    u0 = float(table.phi_inv(v0))
    a = float(table.phi_prime(u0))
    b = float(table.phi_second(u0))
    p = Dphi / a
    X = D2phi / a - b / a**3 * tensor(Dphi, Dphi)
    # f recovered from h: f(x, t) = exp(-w G(t)) h(x, Phi(t))
    f0 = np.exp(-w * float(table.G(u0))) * float(h(x0, float(table.phi(u0))))
    Fu = _M(op, x0, p, X) + float(table.g_spec(u0)) * _N(op, x0, p, X) + f0
    factor = a**w
    if side == "above":
        holds_v = Fv <= tol_visc
        holds_u = Fu <= tol_visc / factor
    else:
        holds_v = Fv >= -tol_visc
        holds_u = Fu >= -tol_visc / factor
    consistency = abs(Fv - factor * Fu) / (1 + abs(Fv))
    return TouchReport(node, side, x0, Fv, Fu, factor, gap, tol_visc, bool(holds_v), bool(holds_u),
                       consistency)
