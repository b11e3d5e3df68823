"""Catalog of second-order operators ``M(x, p, X)`` and their natural gradient terms.

The natural gradient term of an operator is ``N = <dM/dX p, p>`` where
``dM/dX`` is the entrywise derivative of ``M`` in its Hessian slot (set to zero
at ``p = 0``). Each catalog entry records the exponents ``(alpha, beta)`` for
which

    M(x, lam p, X)              = |lam|^alpha M(x, p, X)
    M(x, p, gam X + sig p(x)p)  = gam^(beta+1) M(x, p, X) + sig gam^beta N(x, p, X)

hold; :func:`check_h1` and :func:`check_h2` test both identities on random jets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg

KINDS = ("laplace", "m_laplace", "k_hessian", "infinity_laplace", "normalized_infinity_laplace")

CLOSED_FORM_TOL = 1e-9
NUMERIC_TOL = 1e-6


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    n: int = 2
    m: float | None = None
    k: int | None = None
    alpha: float = field(init=False)
    beta: int = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if not 1 <= self.n <= linalg.MAX_DIM:
            raise ValueError(f"dimension n must be in 1..{linalg.MAX_DIM}, got {self.n}")
        alpha, beta = 0.0, 0
        if self.kind == "m_laplace":
            if self.m is None or not self.m >= 1:
                raise ValueError(f"m-Laplace needs m >= 1, got {self.m}")
            alpha = float(self.m) - 2.0
        elif self.kind == "k_hessian":
            if self.k is None or not 1 <= self.k <= self.n:
                raise ValueError(f"k-Hessian needs 1 <= k <= n={self.n}, got k={self.k}")
            beta = int(self.k) - 1
        elif self.kind == "infinity_laplace":
            alpha = 2.0
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def weight(self) -> float:
        """``alpha + beta + 1``, the exponent of ``Phi'`` in the chain-rule identity."""
        return self.alpha + self.beta + 1

    @property
    def name(self) -> str:
        if self.kind == "laplace":
            return "laplace"
        if self.kind == "m_laplace":
            return f"m-laplace:{self.m:g}"
        if self.kind == "k_hessian":
            return f"k-hessian:{self.k}"
        if self.kind == "infinity_laplace":
            return "infinity"
        return "normalized-infinity"


def parse_operator(name: str, n: int = 2) -> OperatorSpec:
    """Build a catalog entry from its command-line name, e.g. ``"m-laplace:3"``."""
    head, _, arg = name.strip().partition(":")
    try:
        if head == "laplace" and not arg:
            return OperatorSpec("laplace", n)
        if head == "m-laplace":
            return OperatorSpec("m_laplace", n, m=float(arg))
        if head == "k-hessian":
            return OperatorSpec("k_hessian", n, k=int(arg))
        if head == "infinity" and not arg:
            return OperatorSpec("infinity_laplace", n)
        if head == "normalized-infinity" and not arg:
            return OperatorSpec("normalized_infinity_laplace", n)
    except ValueError as exc:
        raise ValueError(f"bad operator {name!r}: {exc}") from None
    raise ValueError(f"unknown operator {name!r}")


@dataclass(frozen=True)
class Jet:
    x: np.ndarray
    p: np.ndarray
    X: np.ndarray

    @classmethod
    def make(cls, x, p, X) -> "Jet":
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        X = np.asarray(X, dtype=float)
        n = p.shape[0]
        if x.shape != (n,) or p.shape != (n,) or X.shape != (n, n):
            raise ValueError(f"jet dimension mismatch: x{x.shape} p{p.shape} X{X.shape}")
        return cls(x, p, X)


def _check_dim(op: OperatorSpec, j: Jet) -> None:
    if j.p.shape != (op.n,) or j.X.shape != (op.n, op.n):
        raise ValueError(f"jet of dimension {j.p.shape[0]} given to operator with n={op.n}")


def _m_laplace(m: float, p: np.ndarray, X: np.ndarray) -> float:
    p2 = float(p @ p)
    if p2 == 0.0:
        # continuous extension for m == 2, zero convention otherwise
        return float(np.trace(X)) if m == 2 else 0.0
    if m == 2:
        return float(np.trace(X))
    return p2 ** ((m - 4) / 2) * (p2 * float(np.trace(X)) + (m - 2) * float(p @ X @ p))


def eval_M(op: OperatorSpec, j: Jet) -> float:
    _check_dim(op, j)
    p, X = j.p, j.X
    kind = op.kind
    if kind == "laplace":
        return float(np.trace(X))
    if kind == "m_laplace":
        return _m_laplace(op.m, p, X)
    if kind == "k_hessian":
        return linalg.ktrace(X, op.k)
    if kind == "infinity_laplace":
        return float(p @ X @ p)
    p2 = float(p @ p)
    return 0.0 if p2 == 0.0 else float(p @ X @ p) / p2


def grad_M(op: OperatorSpec, j: Jet) -> np.ndarray:
    """Closed-form ``dM/dX``; the zero matrix at ``p = 0``."""
    _check_dim(op, j)
    p, X, n = j.p, j.X, op.n
    p2 = float(p @ p)
    if p2 == 0.0:
        return np.zeros((n, n))
    kind = op.kind
    if kind == "laplace":
        return np.eye(n)
    if kind == "m_laplace":
        m = op.m
        return p2 ** ((m - 4) / 2) * (p2 * np.eye(n) + (m - 2) * linalg.tensor(p, p))
    if kind == "k_hessian":
        return linalg.ktrace_gradient(X, op.k)
    if kind == "infinity_laplace":
        return linalg.tensor(p, p)
    return linalg.tensor(p, p) / p2


def grad_M_numeric(op: OperatorSpec, j: Jet, step: float | None = None) -> np.ndarray:
    """Central differences of :func:`eval_M`, one matrix entry at a time."""
    _check_dim(op, j)
    n = op.n
    if not np.any(j.p):
        return np.zeros((n, n))
    if step is None:
        step = 1e-5 * max(1.0, float(np.max(np.abs(j.X))))
    if step <= 0:
        raise ValueError("step must be positive")
    out = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            Xp = j.X.copy()
            Xm = j.X.copy()
            Xp[a, b] += step
            Xm[a, b] -= step
            out[a, b] = (eval_M(op, Jet(j.x, j.p, Xp)) - eval_M(op, Jet(j.x, j.p, Xm))) / (2 * step)
    return out


def eval_N(op: OperatorSpec, j: Jet) -> float:
    """Natural gradient term ``<dM/dX p, p>``."""
    _check_dim(op, j)
    p = j.p
    p2 = float(p @ p)
    if p2 == 0.0:
        return 0.0
    kind = op.kind
    if kind in ("laplace", "normalized_infinity_laplace"):
        return p2
    if kind == "m_laplace":
        return (op.m - 1) * p2 ** (op.m / 2)
    if kind == "infinity_laplace":
        return p2 * p2
    return float(p @ linalg.ktrace_gradient(j.X, op.k) @ p)


def eval_N_numeric(op: OperatorSpec, j: Jet, step: float | None = None) -> float:
    p = j.p
    return float(p @ grad_M_numeric(op, j, step) @ p)


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------


@dataclass
class CheckReport:
    operator: str
    hypothesis: str
    samples: int
    max_rel_error: float
    tol: float
    passed: bool


def random_jet(rng: np.random.Generator, n: int, min_p: float = 0.1) -> Jet:
    """Entries uniform in [-2, 2]; ``p`` redrawn until ``|p| >= min_p``."""
    x = rng.uniform(-2, 2, n)
    while True:
        p = rng.uniform(-2, 2, n)
        if np.linalg.norm(p) >= min_p:
            break
    A = rng.uniform(-2, 2, (n, n))
    X = np.triu(A) + np.triu(A, 1).T
    return Jet(x, p, X)


def _random_scale(rng: np.random.Generator) -> float:
    mag = rng.uniform(0.1, 3.0)
    return mag if rng.random() < 0.5 else -mag


def check_h1(op: OperatorSpec, samples: int = 1000, seed: int = 0) -> CheckReport:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        j = random_jet(rng, op.n)
        lam = _random_scale(rng)
        base = eval_M(op, j)
        scaled = eval_M(op, Jet(j.x, lam * j.p, j.X))
        err = abs(scaled - abs(lam) ** op.alpha * base) / (1 + abs(base))
        worst = max(worst, err)
    return CheckReport(op.name, "h1", samples, worst, CLOSED_FORM_TOL, worst <= CLOSED_FORM_TOL)


def check_h2(op: OperatorSpec, samples: int = 1000, seed: int = 0,
             numeric_N: bool = False) -> CheckReport:
    """Rank-one shift identity; ``numeric_N`` swaps in the finite-difference ``N``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    tol = NUMERIC_TOL if numeric_N else CLOSED_FORM_TOL
    worst = 0.0
    for _ in range(samples):
        j = random_jet(rng, op.n)
        gam = _random_scale(rng)
        sig = rng.uniform(-3, 3)
        M0 = eval_M(op, j)
        N0 = eval_N_numeric(op, j) if numeric_N else eval_N(op, j)
        shifted = Jet(j.x, j.p, gam * j.X + sig * linalg.tensor(j.p, j.p))
        lhs = eval_M(op, shifted)
        t1 = gam ** (op.beta + 1) * M0
        t2 = sig * gam ** op.beta * N0
        err = abs(lhs - t1 - t2) / (1 + abs(t1) + abs(t2))
        worst = max(worst, err)
    return CheckReport(op.name, "h2", samples, worst, tol, worst <= tol)


def cross_check_N(op: OperatorSpec, samples: int = 1000, seed: int = 0,
                  tol: float = 1e-5) -> CheckReport:
    """Closed-form ``N`` against ``<grad_M_numeric p, p>`` on random jets."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        j = random_jet(rng, op.n)
        N = eval_N(op, j)
        err = abs(N - eval_N_numeric(op, j)) / (1 + abs(N))
        worst = max(worst, err)
    return CheckReport(op.name, "N", samples, worst, tol, worst <= tol)


def default_catalog(n: int = 3) -> list[OperatorSpec]:
    """One representative of each catalog family."""
    return [
        OperatorSpec("laplace", n),
        OperatorSpec("m_laplace", n, m=3.0),
        OperatorSpec("k_hessian", n, k=2),
        OperatorSpec("infinity_laplace", n),
        OperatorSpec("normalized_infinity_laplace", n),
    ]
