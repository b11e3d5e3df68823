"""Scalar expression language: parsing, evaluation and symbolic differentiation.

Expressions carry the user-supplied data of a problem (``g(t)``, ``f(x, t)``,
boundary data ``b(x)``) and the manufactured solutions used in verification.
Nodes are immutable; every operation here is pure.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so ``-t^2``
is ``-(t^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ParseError",
    "EvalError",
    "parse",
    "evaluate",
    "differentiate",
    "to_string",
    "free_vars",
    "FUNCTIONS",
]

# name -> allowed arity (None: two or more)
FUNCTIONS = {
    "exp": 1,
    "ln": 1,
    "sin": 1,
    "cos": 1,
    "abs": 1,
    "sqrt": 1,
    "step": 1,
    "pow": 2,
    "min": None,
    "max": None,
}


class ParseError(ValueError):
    """Syntax error with the byte offset and the set of tokens that would fit."""

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = expected
        detail = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at byte {offset}{detail}")


class EvalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]

# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str  # num, ident, op, eof
    text: str
    offset: int


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    # byte offsets, since the error contract is phrased in bytes
    byte_at = []
    acc = 0
    for ch in source:
        byte_at.append(acc)
        acc += len(ch.encode("utf-8"))
    byte_at.append(acc)
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", byte_at[pos])
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), byte_at[pos]))
        pos = m.end()
    toks.append(_Tok("eof", "", byte_at[-1]))
    return toks


_ATOM_START = frozenset({"number", "identifier", "(", "-"})


class _Parser:
    def __init__(self, source: str):
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def _expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            raise ParseError(f"unexpected {self.tok.text or 'end of input'!r}", self.tok.offset,
                             frozenset({text}))
        self.i += 1

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            raise ParseError(f"unexpected {self.tok.text!r}", self.tok.offset,
                             frozenset({"+", "-", "*", "/", "^", "end of input"}))
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._take().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._take().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self._take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self._take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self._take()
            return Num(float(t.text))
        if t.kind == "ident":
            self._take()
            if self.tok.kind == "op" and self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {t.text!r}", t.offset,
                                     frozenset(FUNCTIONS))
                self._take()
                args = [self.expr()]
                while self.tok.kind == "op" and self.tok.text == ",":
                    self._take()
                    args.append(self.expr())
                self._expect(")")
                arity = FUNCTIONS[t.text]
                if (arity is None and len(args) < 2) or (arity is not None and len(args) != arity):
                    want = "at least 2" if arity is None else str(arity)
                    raise ParseError(f"{t.text}() takes {want} argument(s), got {len(args)}",
                                     t.offset)
                return Call(t.text, tuple(args))
            return Var(t.text)
        if t.kind == "op" and t.text == "(":
            self._take()
            e = self.expr()
            self._expect(")")
            return e
        raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.offset, _ATOM_START)


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    >>> to_string(parse("2*t/(1+t^2)"))
    '2*t/(1+t^2)'
    """
    return _Parser(source).parse()


def _as_expr(e) -> Expr:
    if isinstance(e, str):
        return parse(e)
    if isinstance(e, (int, float)):
        return Num(float(e))
    return e


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return 4 if e.op == "^" else _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return 5


def _fmt_num(v: float) -> str:
    if v < 0 or math.copysign(1.0, v) < 0:
        return "-" + _fmt_num(-v)
    if v.is_integer() and v < 1e16:
        return str(int(v))
    return repr(v)


def to_string(e: Expr) -> str:
    """Render ``e`` with the minimum parentheses needed to re-parse it."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_string(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if e.op == "^":
        base = to_string(e.left)
        if _prec(e.left) < 5:
            base = f"({base})"
        expo = to_string(e.right)
        if _prec(e.right) < 3:
            expo = f"({expo})"
        return f"{base}^{expo}"
    p = _PREC[e.op]
    left = to_string(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_string(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left}{e.op}{right}"


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    out = frozenset()
    for a in e.args:
        out |= free_vars(a)
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _pow(base, expo):
    base = np.asarray(base, dtype=float)
    expo = np.asarray(expo, dtype=float)
    if np.any((base == 0) & (expo < 0)):
        raise EvalError("0 raised to a negative power")
    if np.any((base < 0) & (expo != np.floor(expo))):
        raise EvalError("negative base raised to a non-integer power")
    return np.power(base, expo)


def _ev(e: Expr, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_ev(e.arg, env)
    if isinstance(e, BinOp):
        a = _ev(e.left, env)
        b = _ev(e.right, env)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(np.asarray(b) == 0):
                raise EvalError("division by zero")
            return np.true_divide(a, b)
        return _pow(a, b)
    args = [_ev(a, env) for a in e.args]
    name = e.name
    if name == "exp":
        return np.exp(args[0])
    if name == "ln":
        if np.any(np.asarray(args[0]) <= 0):
            raise EvalError("ln of a non-positive value")
        return np.log(args[0])
    if name == "sqrt":
        if np.any(np.asarray(args[0]) < 0):
            raise EvalError("sqrt of a negative value")
        return np.sqrt(args[0])
    if name == "sin":
        return np.sin(args[0])
    if name == "cos":
        return np.cos(args[0])
    if name == "abs":
        return np.abs(args[0])
    if name == "step":
        return np.where(np.asarray(args[0]) >= 0, 1.0, 0.0)
    if name == "pow":
        return _pow(args[0], args[1])
    if name == "min":
        out = args[0]
        for a in args[1:]:
            out = np.minimum(out, a)
        return out
    if name == "max":
        out = args[0]
        for a in args[1:]:
            out = np.maximum(out, a)
        return out
    raise EvalError(f"unknown function {name!r}")


def evaluate(e, bindings: Mapping[str, object] | None = None, **kw):
    """Evaluate ``e`` under ``bindings``.

    Bindings may be floats or numpy arrays (broadcast together). A missing
    variable, a domain violation, or a NaN result raises :class:`EvalError`;
    overflow to infinity is allowed.
    """
    e = _as_expr(e)
    env = dict(bindings or {})
    env.update(kw)
    with np.errstate(all="ignore"):
        out = _ev(e, env)
    arr = np.asarray(out, dtype=float)
    if np.any(np.isnan(arr)):
        raise EvalError(f"NaN while evaluating {to_string(e)}")
    if arr.ndim == 0:
        return float(arr)
    return arr


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(e, v=None) -> bool:
    return isinstance(e, Num) and (v is None or e.value == v)


def _add(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(b, 1.0):
        return a
    if _is_num(a, 0.0):
        return ZERO
    if _is_num(a) and _is_num(b) and b.value != 0:
        return Num(a.value / b.value)
    return BinOp("/", a, b)


def _neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _powe(a, b):
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def _call(name, *args):
    return Call(name, tuple(args))


def _d_pow(a, b, var):
    da = _d(a, var)
    if var not in free_vars(b):
        # b * a^(b-1) * a'
        return _mul(_mul(b, _powe(a, _sub(b, ONE))), da)
    db = _d(b, var)
    if var not in free_vars(a):
        return _mul(_mul(BinOp("^", a, b), _call("ln", a)), db)
    return _mul(BinOp("^", a, b), _add(_mul(db, _call("ln", a)), _div(_mul(b, da), a)))


def _d_select(a, b, cond, var):
    # derivative of a branch-select: a' where cond >= 0, else b'
    da, db = _d(a, var), _d(b, var)
    if da == db:
        return da
    return _add(db, _mul(_sub(da, db), _call("step", cond)))


def _d(e: Expr, var: str) -> Expr:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if var not in free_vars(e):
        return ZERO
    if isinstance(e, Neg):
        return _neg(_d(e.arg, var))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        if e.op == "+":
            return _add(_d(a, var), _d(b, var))
        if e.op == "-":
            return _sub(_d(a, var), _d(b, var))
        if e.op == "*":
            return _add(_mul(_d(a, var), b), _mul(a, _d(b, var)))
        if e.op == "/":
            da, db = _d(a, var), _d(b, var)
            if var not in free_vars(b):
                return _div(da, b)
            return _div(_sub(_mul(da, b), _mul(a, db)), _powe(b, Num(2.0)))
        return _d_pow(a, b, var)
    name, args = e.name, e.args
    if name in ("min", "max"):
        # fold left so ties resolve to the leftmost argument
        acc = args[0]
        for nxt in args[1:]:
            acc = Call(name, (acc, nxt))
        a, b = acc.args
        cond = _sub(a, b) if name == "max" else _sub(b, a)
        return _d_select(a, b, cond, var)
    if name == "pow":
        return _d_pow(args[0], args[1], var)
    a = args[0]
    da = _d(a, var)
    if name == "exp":
        return _mul(e, da)
    if name == "ln":
        return _div(da, a)
    if name == "sin":
        return _mul(_call("cos", a), da)
    if name == "cos":
        return _neg(_mul(_call("sin", a), da))
    if name == "sqrt":
        return _div(da, _mul(Num(2.0), e))
    if name == "abs":
        # abs(a) == max(-a, a): at a == 0 the left branch -a is taken
        return _mul(da, _sub(ONE, _mul(Num(2.0), _call("step", _neg(a)))))
    if name == "step":
        return ZERO
    raise ValueError(f"cannot differentiate {name!r}")


def differentiate(e, var: str) -> Expr:
    """Return the symbolic partial derivative of ``e`` with respect to ``var``.

    Kinks of ``abs``/``min``/``max`` get the almost-everywhere derivative,
    with ties resolved towards the left branch.
    """
    return _d(_as_expr(e), var)
