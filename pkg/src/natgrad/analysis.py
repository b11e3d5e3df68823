"""Hypothesis quantities for existence, uniqueness and non-existence of solutions.

Everything over a non-compact set is truncated at ``t_max`` and sampled; the
reports say so. Results are deterministic (no random sampling anywhere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import expr as E
from .io import csv_text, fmt
from .quadrature import gauss_legendre
from .solver.domain import Domain2D
from .transform import GSpec, TransformTable, build_table

EPS_FG = 1e-6
UNIQ_TOL = 1e-10


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    f: E.Expr
    g_spec: GSpec
    domain: Domain2D
    b: E.Expr
    t_max: float = 50.0
    quad_tol: float = 1e-10
    x_samples: int = 64
    s_samples: int = 512
    a_samples: int = 64

    def __post_init__(self):
        for name in ("f", "b"):
            val = getattr(self, name)
            if isinstance(val, str):
                object.__setattr__(self, name, E.parse(val))
        if isinstance(self.g_spec, str):
            object.__setattr__(self, "g_spec", GSpec.from_string(self.g_spec))
        if not self.t_max > 1:
            raise AnalysisError("t_max must exceed 1")
        bad = E.free_vars(self.f) - {"x1", "x2", "t"}
        if bad:
            raise AnalysisError(f"f may only depend on x1, x2, t, found {sorted(bad)}")
        bad = E.free_vars(self.b) - {"x1", "x2"}
        if bad:
            raise AnalysisError(f"b may only depend on x1, x2, found {sorted(bad)}")

    @property
    def f_depends_on_x(self) -> bool:
        return bool(E.free_vars(self.f) & {"x1", "x2"})


def _xy(e, x, y, **kw):
    shape = np.broadcast(x, y, *kw.values()).shape
    return np.broadcast_to(E.evaluate(e, {"x1": x, "x2": y, **kw}), shape).astype(float)


class Analysis:
    """Shared state for one configuration: the transform table and the x-sample set."""

    def __init__(self, cfg: AnalysisConfig, table: TransformTable | None = None):
        self.cfg = cfg
        xb, yb, _ = cfg.domain.boundary_samples(512)
        bv = _xy(cfg.b, xb, yb)
        t_lo = min(float(bv.min()), 0.0) - 1.0
        self.table = table if table is not None else build_table(cfg.g_spec, t_lo, cfg.t_max, cfg.quad_tol)
        if self.table.t_max < cfg.t_max:
            raise AnalysisError("transform table does not reach t_max")
        self.xs, self.ys = self._interior_samples()
        self._ell = None
        self._profile = None

    def _interior_samples(self):
        if not self.cfg.f_depends_on_x:
            # f is constant in x: one point stands for all of them
            x0, y0, x1, y1 = self.cfg.domain.bbox
            return np.array([0.5 * (x0 + x1)]), np.array([0.5 * (y0 + y1)])
        k = self.cfg.x_samples
        x0, y0, x1, y1 = self.cfg.domain.bbox
        gx = x0 + (np.arange(k) + 0.5) / k * (x1 - x0)
        gy = y0 + (np.arange(k) + 0.5) / k * (y1 - y0)
        X, Y = np.meshgrid(gx, gy)
        inside = self.cfg.domain.signed_distance(X, Y) < 0
        return X[inside], Y[inside]

    # -- l ------------------------------------------------------------------

    def ell(self) -> float:
        """``inf Phi_g(b)`` over the boundary: 512 samples, then a bounded Brent refinement."""
        if self._ell is not None:
            return self._ell
        dom, tbl = self.cfg.domain, self.table

        def obj(s):
            x, y = dom.boundary_point(s)
            return float(tbl.phi(_xy(self.cfg.b, x, y)))

        x, y, s = dom.boundary_samples(512)
        vals = tbl.phi(_xy(self.cfg.b, x, y))
        k = int(np.argmin(vals))
        best = float(vals[k])
        step = 1.0 / len(s)
        res = minimize_scalar(obj, bounds=(s[k] - step, s[k] + step), method="bounded",
                              options={"xatol": 1e-12})
        if res.fun < best:
            best = float(res.fun)
        self._ell = best
        return best

    # -- eta ------------------------------------------------------------------

    @property
    def s_frontier(self) -> float:
        return float(self.table.phi(self.cfg.t_max))

    def integrand_min(self, s) -> np.ndarray:
        """``min_x exp(3 G(w)) f(x, w)`` with ``w = Phi^{-1}(s)``; a negative ``f`` sample is an error."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        w = self.table.phi_inv(s)
        fv = _xy(self.cfg.f, self.xs[:, None], self.ys[:, None], t=w[None, :])
        if np.any(fv < 0):
            i, j = np.unravel_index(int(np.argmin(fv)), fv.shape)
            raise AnalysisError(
                f"f is negative at x=({self.xs[i]!r}, {self.ys[i]!r}), t={w[j]!r}: f={fv[i, j]!r}; "
                "the non-existence test needs f >= 0"
            )
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.exp(3 * self.table.G(w))[None, :] * fv
        vals = np.where(np.isnan(vals), np.inf, vals)
        return vals.min(axis=0)

    def s_grid(self, t: float, count: int) -> np.ndarray:
        """``t`` followed by ``count - 1`` log-spaced offsets up to the frontier."""
        top = self.s_frontier
        if t >= top:
            return np.array([t])
        span = top - t
        offs = np.geomspace(span * 1e-12, span, count - 1)
        return np.concatenate([[t], t + offs])

    def eta(self, t: float) -> float:
        """Sampled ``inf`` over the interior samples and ``s in [t, Phi_g(t_max)]``."""
        if t < self.ell() - 1e-12:
            raise AnalysisError(f"eta is defined for t >= l = {self.ell()!r}, got {t!r}")
        return float(self.integrand_min(self.s_grid(t, self.cfg.s_samples)).min())

    def eta_profile(self):
        """Vectorised ``eta`` for quadrature: a global s-grid suffix minimum combined
        with the exact integrand minimum at the query point."""
        if self._profile is not None:
            return self._profile
        ell = self.ell()
        grid = self.s_grid(ell, 4096)
        vals = self.integrand_min(grid)
        suffix = np.minimum.accumulate(vals[::-1])[::-1]

        def profile(t):
            t = np.asarray(t, dtype=float)
            flat = t.ravel()
            k = np.searchsorted(grid, flat, side="left")
            tail = np.where(k < len(grid), suffix[np.minimum(k, len(grid) - 1)], np.inf)
            here = self.integrand_min(np.clip(flat, ell, self.s_frontier))
            return np.minimum(here, tail).reshape(t.shape)

        self._profile = profile
        return profile


# ---------------------------------------------------------------------------
# H and zeta for a given eta
# ---------------------------------------------------------------------------


def increment(eta, lo, hi, order: int = 16, panels: int = 4) -> np.ndarray:
    """``int_lo^hi eta`` for arrays of intervals, composite Gauss-Legendre."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, w = gauss_legendre(order)
    total = np.zeros(np.broadcast(lo, hi).shape)
    width = (hi - lo) / panels
    for p in range(panels):
        a = lo + p * width
        mid = a + 0.5 * width
        pts = mid[..., None] + 0.5 * width[..., None] * x
        with np.errstate(over="ignore", invalid="ignore"):
            total = total + 0.5 * width * (np.asarray(eta(pts)) @ w)
    return total


def H_table(eta, ell: float, knots) -> np.ndarray:
    """Cumulative ``H(t) = int_l^t eta`` at increasing ``knots`` (first knot = l)."""
    knots = np.asarray(knots, dtype=float)
    pieces = increment(eta, knots[:-1], knots[1:])
    return np.concatenate([[0.0], np.cumsum(pieces)])


def _zeta_fixed(eta, ell, a, panels, order):
    T = (a - ell) ** 0.25
    x, w = gauss_legendre(order)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * np.diff(edges)
    tau = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * x
    tau = tau.ravel()
    # H(a) - H(a - tau^4) computed as one integral, never as a difference of two tables
    D = increment(eta, a - tau**4, np.full_like(tau, a))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        vals = 4 * tau**3 * D ** -0.25
    if np.any(D <= 0) or np.any(np.isnan(vals)):
        return math.inf
    vals = vals.reshape(panels, order)
    return float(np.sum(half * (vals @ w)))


def zeta(eta, ell: float, a: float, tol: float = 1e-10, order: int = 16,
         max_panels: int = 1024) -> float:
    """``int_l^a (H(a) - H(t))^(-1/4) dt`` via ``t = a - tau^4``.

    Panels double until successive estimates agree to ``tol`` (relative).
    Returns ``inf`` when ``eta`` vanishes on part of ``(l, a]``.
    """
    if a < ell:
        raise AnalysisError(f"need a >= l, got a={a!r}, l={ell!r}")
    if a == ell:
        return 0.0
    panels = 4
    prev = _zeta_fixed(eta, ell, a, panels, order)
    while panels < max_panels:
        panels *= 2
        cur = _zeta_fixed(eta, ell, a, panels, order)
        if not math.isfinite(cur):
            return cur
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    return prev


def zeta_bruteforce(H, eta_a: float, ell: float, a: float, panels: int = 1_000_000,
                    delta: float = 1e-8) -> float:
    """Midpoint rule on ``[l, a - delta]`` plus the leading-order tail
    ``eta(a)^(-1/4) (4/3) delta^(3/4)``. ``H`` must be an accurate primitive."""
    b = a - delta
    dt = (b - ell) / panels
    t = ell + (np.arange(panels) + 0.5) * dt
    body = float(np.sum((H(a) - H(t)) ** -0.25) * dt)
    return body + eta_a ** -0.25 * (4.0 / 3.0) * delta ** 0.75


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class NonexistenceReport:
    ell: float
    eta_samples: list
    H_table: list
    zeta_samples: list
    S: float
    sup_attained_interior: bool
    R: float
    eta0_passed: bool
    verdict: str
    t_max: float
    frontier: float

    def to_text(self) -> str:
        out = ["[ELL]", f"ell={fmt(self.ell)}", "", "[ETA]",
               f"truncation t_max={fmt(self.t_max)} s_frontier={fmt(self.frontier)}",
               f"eta0_spot_check={'pass' if self.eta0_passed else 'fail'}"]
        out += [f"{fmt(t)} {fmt(v)}" for t, v in self.eta_samples]
        out += ["", "[H]"] + [f"{fmt(t)} {fmt(v)}" for t, v in self.H_table]
        out += ["", "[ZETA]"] + [f"{fmt(a)} {fmt(z)}" for a, z in self.zeta_samples]
        bound = "exact_scan_max" if self.sup_attained_interior else "lower_bound"
        out += ["", "[S]", f"S={fmt(self.S)} {bound} sup_attained_interior={self.sup_attained_interior}"]
        out += ["", "[R]", f"R={fmt(self.R)} S/sqrt2={fmt(self.S / math.sqrt(2))}"]
        out += ["", "[VERDICT]", self.verdict]
        return "\n".join(out) + "\n"

    def eta_csv(self) -> str:
        t, v = zip(*self.eta_samples) if self.eta_samples else ((), ())
        return csv_text(["t", "eta"], [t, v])

    def zeta_csv(self) -> str:
        a, z = zip(*self.zeta_samples) if self.zeta_samples else ((), ())
        return csv_text(["a", "zeta"], [a, z])


def _offsets(ell: float, top: float, count: int) -> np.ndarray:
    span = top - ell
    return ell + np.geomspace(min(1e-3, span * 1e-3), span, count)


def compute_S_and_verdict(cfg: AnalysisConfig, analysis: Analysis | None = None) -> NonexistenceReport:
    an = analysis if analysis is not None else Analysis(cfg)
    ell = an.ell()
    top = an.s_frontier
    if not top > ell:
        raise AnalysisError(f"frontier Phi(t_max)={top!r} does not exceed l={ell!r}")
    eta = an.eta_profile()
    a_vals = _offsets(ell, top, cfg.a_samples)

    eta_ts = np.concatenate([[ell], a_vals])
    eta_vals = [an.eta(float(t)) for t in eta_ts]
    eta0 = all(v > 0 for v in eta_vals[1:])

    knots = np.concatenate([[ell], a_vals])
    H = H_table(eta, ell, knots)
    finite = np.isfinite(H)

    zs = [zeta(eta, ell, float(a), cfg.quad_tol) for a in a_vals]
    k = int(np.argmax(zs))
    S = float(zs[k])
    interior = k < len(zs) - 1
    R = cfg.domain.inradius
    triggered = eta0 and math.isfinite(S) and R > S / math.sqrt(2)
    return NonexistenceReport(
        ell=ell,
        eta_samples=list(zip(eta_ts.tolist(), eta_vals)),
        H_table=list(zip(knots[finite].tolist(), H[finite].tolist())),
        zeta_samples=list(zip(a_vals.tolist(), zs)),
        S=S,
        sup_attained_interior=interior,
        R=R,
        eta0_passed=eta0,
        verdict="nonexistence_triggered" if triggered else "inconclusive",
        t_max=cfg.t_max,
        frontier=top,
    )


def compute_ell(cfg: AnalysisConfig) -> float:
    return Analysis(cfg).ell()


def compute_eta(cfg: AnalysisConfig, t: float) -> float:
    return Analysis(cfg).eta(t)


def compute_zeta(cfg: AnalysisConfig, a: float) -> float:
    an = Analysis(cfg)
    return zeta(an.eta_profile(), an.ell(), a, cfg.quad_tol)


# ---------------------------------------------------------------------------
# growth condition at +-infinity
# ---------------------------------------------------------------------------


@dataclass
class FgSide:
    t: np.ndarray
    ratio: np.ndarray
    frontier_value: float
    trend: str
    violated: bool
    satisfied: bool


@dataclass
class FgLimitReport:
    nu_hat: float
    xi_hat: float
    plus: FgSide
    minus: FgSide
    trend: str
    verdict: str
    eps: float = EPS_FG
    note: str = field(default="heuristic: ratios sampled up to the truncation frontier only")

    def to_text(self) -> str:
        out = ["[FG]", self.note, f"eps={fmt(self.eps)}",
               f"nu_hat={fmt(self.nu_hat)} trend_plus={self.plus.trend}",
               f"xi_hat={fmt(self.xi_hat)} trend_minus={self.minus.trend}", "", "[RATIO_PLUS]"]
        out += [f"{fmt(t)} {fmt(r)}" for t, r in zip(self.plus.t, self.plus.ratio)]
        out += ["", "[RATIO_MINUS]"]
        out += [f"{fmt(t)} {fmt(r)}" for t, r in zip(self.minus.t, self.minus.ratio)]
        out += ["", "[VERDICT]", self.verdict]
        return "\n".join(out) + "\n"

    def csv(self) -> str:
        return csv_text(["t", "ratio"], [np.concatenate([self.minus.t[::-1], self.plus.t]),
                                         np.concatenate([self.minus.ratio[::-1], self.plus.ratio])])


def _trend(r: np.ndarray) -> str:
    with np.errstate(invalid="ignore"):
        d = np.diff(r)
    d = d[np.isfinite(d)]
    if d.size == 0 or np.all(d == 0):
        return "flat"
    if np.all(d >= 0):
        return "increasing"
    if np.all(d <= 0):
        return "decreasing"
    return "oscillating"


def check_fg_limits(cfg: AnalysisConfig, probes: int = 64) -> FgLimitReport:
    """Ratios ``sup_x e^{3G(t)} f(x,t) / Phi(t)^3`` (t -> +inf) and the ``inf_x``
    counterpart (t -> -inf) on ``1 <= |t| <= t_max``."""
    tbl = build_table(cfg.g_spec, -cfg.t_max, cfg.t_max, cfg.quad_tol)
    an = Analysis(cfg, table=tbl)
    xs, ys = an.xs, an.ys
    t = np.geomspace(1.0, cfg.t_max, probes)
    last = t >= cfg.t_max / 10

    def side(tt, reduce):
        fv = _xy(cfg.f, xs[:, None], ys[:, None], t=tt[None, :])
        with np.errstate(over="ignore", invalid="ignore"):
            num = np.exp(3 * tbl.G(tt)) * reduce(fv, axis=0)
            r = num / tbl.phi(tt) ** 3
        tail = r[last]
        violated = bool(np.all(tail > EPS_FG))
        satisfied = bool(np.all(tail <= EPS_FG))
        return FgSide(tt, r, float(r[-1]), _trend(tail), violated, satisfied)

    plus = side(t, np.max)
    minus = side(-t, np.min)
    if plus.violated or minus.violated:
        verdict = "violated"
    elif plus.satisfied and minus.satisfied:
        verdict = "plausibly_satisfied"
    else:
        verdict = "inconclusive"
    return FgLimitReport(plus.frontier_value, minus.frontier_value, plus, minus, plus.trend, verdict)


# ---------------------------------------------------------------------------
# uniqueness
# ---------------------------------------------------------------------------


@dataclass
class UniquenessReport:
    monotone: bool
    witness: float | None
    max_derivative: float
    t_range: tuple

    def to_text(self) -> str:
        w = "none" if self.witness is None else fmt(self.witness)
        return (f"[UNIQUENESS]\nrange={fmt(self.t_range[0])},{fmt(self.t_range[1])}\n"
                f"max_derivative={fmt(self.max_derivative)}\nwitness={w}\n"
                f"[VERDICT]\n{'monotone' if self.monotone else 'not_monotone'}\n")


def check_uniqueness_hypothesis(f_bar, g_spec: GSpec, t_range=(-10.0, 10.0),
                                table: TransformTable | None = None, points: int = 10_000) -> UniquenessReport:
    """Sign of ``d/dt [f(t) e^{3G(t)}] = e^{3G}(f' + 3 g f)`` on ``points`` samples."""
    f_bar = E.parse(f_bar) if isinstance(f_bar, str) else f_bar
    bad = E.free_vars(f_bar) - {"t"}
    if bad:
        raise AnalysisError(f"f_bar may only depend on t, found {sorted(bad)}")
    lo, hi = float(t_range[0]), float(t_range[1])
    if not lo < hi:
        raise AnalysisError("empty probe range")
    t = np.linspace(lo, hi, points)
    df = E.differentiate(f_bar, "t")
    fv = np.broadcast_to(E.evaluate(f_bar, {"t": t}), t.shape)
    dfv = np.broadcast_to(E.evaluate(df, {"t": t}), t.shape)
    if g_spec.is_zero:
        weight = np.ones_like(t)
    else:
        tbl = table if table is not None else build_table(g_spec, min(lo, -1.0), max(hi, 1.0))
        weight = np.exp(3 * tbl.G(t))
    d = weight * (dfv + 3 * g_spec(t) * fv)
    k = int(np.argmax(d))
    bad = d[k] > UNIQ_TOL
    return UniquenessReport(not bad, float(t[k]) if bad else None, float(d[k]), (lo, hi))
