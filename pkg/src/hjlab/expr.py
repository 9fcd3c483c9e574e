"""Scalar expressions over named coordinates with forward-mode derivatives.

Grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Derivatives are exact: evaluation runs on nested dual numbers, one tag per
differentiation, so ``Deriv`` nodes may be nested to any order.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary", "Deriv", "Subst",
    "Dual", "dual", "ParseError", "EvalError", "FUNCTIONS",
    "parse", "to_source", "evaluate", "grad", "second_partial",
    "const", "var", "neg", "add", "sub", "mul", "div", "deriv", "subst",
    "rename", "total",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh", "asin", "atan")


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvalError(ArithmeticError):
    """Unbound variable or domain violation; ``offset`` locates the node."""

    def __init__(self, message: str, offset: int = -1):
        where = f" (at offset {offset})" if offset >= 0 else ""
        super().__init__(message + where)
        self.offset = offset


class _Domain(Exception):
    pass


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expr:
    pos: int = field(default=-1, compare=False, repr=False, kw_only=True)
    free: frozenset = field(default=frozenset(), init=False, compare=False, repr=False)

    def _set_free(self, names):
        object.__setattr__(self, "free", frozenset(names))

    def __str__(self):
        return to_source(self)

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def __post_init__(self):
        self._set_free((self.name,))


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # 'neg' or a name from FUNCTIONS
    arg: Expr

    def __post_init__(self):
        self._set_free(self.arg.free)


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr

    def __post_init__(self):
        self._set_free(self.left.free | self.right.free)


@dataclass(frozen=True)
class Deriv(Expr):
    """Partial derivative of ``arg`` with respect to ``var``, evaluated by AD."""

    arg: Expr
    var: str

    def __post_init__(self):
        self._set_free(self.arg.free)


@dataclass(frozen=True)
class Subst(Expr):
    """``arg`` with variables replaced by expressions of the outer scope."""

    arg: Expr
    bindings: tuple  # ((name, Expr), ...)

    def __post_init__(self):
        names = set(self.arg.free)
        for name, e in self.bindings:
            if name in self.arg.free:
                names.discard(name)
        for name, e in self.bindings:
            if name in self.arg.free:
                names |= e.free
        self._set_free(names)


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return const(x)
    return NotImplemented


# --------------------------------------------------------------------------
# builders; they only drop structurally trivial terms


ZERO = Const(0.0)
ONE = Const(1.0)


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def const(v: float) -> Expr:
    v = float(v)
    if v < 0:
        return Unary("neg", Const(-v))
    return Const(v)


def var(name: str) -> Var:
    return Var(name)


def neg(a: Expr) -> Expr:
    if _is(a, 0.0):
        return ZERO
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return Binary("/", a, b)


def total(terms) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


def deriv(a: Expr, name: str) -> Expr:
    if name not in a.free:
        return ZERO
    return Deriv(a, name)


def subst(a: Expr, mapping: Mapping[str, Expr]) -> Expr:
    bindings = tuple((k, v) for k, v in mapping.items() if k in a.free)
    if not bindings:
        return a
    return Subst(a, bindings)


def rename(a: Expr, mapping: Mapping[str, str]) -> Expr:
    """Rename variables throughout a parsed tree (no Deriv/Subst nodes)."""
    if isinstance(a, Var):
        return Var(mapping.get(a.name, a.name), pos=a.pos)
    if isinstance(a, Const):
        return a
    if isinstance(a, Unary):
        return Unary(a.op, rename(a.arg, mapping), pos=a.pos)
    if isinstance(a, Binary):
        return Binary(a.op, rename(a.left, mapping), rename(a.right, mapping), pos=a.pos)
    if isinstance(a, Deriv):
        return Deriv(rename(a.arg, mapping), mapping.get(a.var, a.var), pos=a.pos)
    if isinstance(a, Subst):
        return Subst(
            rename(a.arg, mapping),
            tuple((mapping.get(k, k), rename(v, mapping)) for k, v in a.bindings),
            pos=a.pos,
        )
    raise TypeError(type(a))


# --------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _byte_offset(source: str, i: int) -> int:
    return len(source[:i].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.src = source
        self.tokens = []  # (kind, text, char offset)
        i = 0
        while True:
            m = _TOKEN.match(source, i)
            if m is None or m.end() == i:
                rest = source[i:]
                if rest.strip() == "":
                    break
                j = i + len(rest) - len(rest.lstrip())
                raise ParseError(f"unexpected character {source[j]!r}", _byte_offset(source, j))
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            i = m.end()
        self.end = len(source)
        self.k = 0

    def peek(self):
        if self.k < len(self.tokens):
            return self.tokens[self.k]
        return ("eof", "", self.end)

    def take(self):
        tok = self.peek()
        self.k += 1
        return tok

    def off(self, tok) -> int:
        return _byte_offset(self.src, tok[2])

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        if tok[0] == "eof":
            msg = msg + " (unexpected end of input)"
        raise ParseError(msg, self.off(tok))

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            tok = self.take()
            left = Binary(tok[1], left, self.term(), pos=self.off(tok))
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            tok = self.take()
            left = Binary(tok[1], left, self.unary(), pos=self.off(tok))
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Unary("neg", self.unary(), pos=self.off(tok))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            return Binary("^", base, self.unary(), pos=self.off(tok))
        return base

    def atom(self) -> Expr:
        tok = self.take()
        kind, text = tok[0], tok[1]
        if kind == "num":
            return Const(float(text), pos=self.off(tok))
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", self.off(tok))
                self.take()
                arg = self.expr()
                self.expect_close(nxt)
                return Unary(text, arg, pos=self.off(tok))
            return Var(text, pos=self.off(tok))
        if kind == "op" and text == "(":
            inner = self.expr()
            self.expect_close(tok)
            return inner
        self.fail("expected a number, name or '('", tok)

    def expect_close(self, opening):
        tok = self.take()
        if not (tok[0] == "op" and tok[1] == ")"):
            if tok[0] == "eof":
                raise ParseError("unbalanced '('", self.off(opening))
            self.fail("expected ')'", tok)


def parse(source: str) -> Expr:
    """Parse expression text into an AST."""
    p = _Parser(source)
    if not p.tokens:
        raise ParseError("empty expression", 0)
    e = p.expr()
    if p.peek()[0] != "eof":
        p.fail("unexpected token " + repr(p.peek()[1]))
    return e


# precedence levels used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return 3
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return 5


def to_source(e: Expr) -> str:
    """Print with minimal parentheses; ``parse(to_source(e)) == e`` for parsed trees."""
    if isinstance(e, Const):
        v = e.value
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_source(e.arg)
            return "-" + (inner if _prec(e.arg) >= 3 else f"({inner})")
        return f"{e.op}({to_source(e.arg)})"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        ls, rs = to_source(e.left), to_source(e.right)
        if e.op == "^":
            if _prec(e.left) <= 4:
                ls = f"({ls})"
            if _prec(e.right) < 3:
                rs = f"({rs})"
        else:
            if _prec(e.left) < p:
                ls = f"({ls})"
            if _prec(e.right) <= p:
                rs = f"({rs})"
        sep = "" if e.op == "^" else " "
        return f"{ls}{sep}{e.op}{sep}{rs}"
    if isinstance(e, Deriv):
        return f"D[{e.var}]({to_source(e.arg)})"
    if isinstance(e, Subst):
        binds = ", ".join(f"{k}={to_source(v)}" for k, v in e.bindings)
        return f"({to_source(e.arg)})[{binds}]"
    raise TypeError(type(e))


# --------------------------------------------------------------------------
# dual numbers

_tags = itertools.count()


class Dual:
    """``val + eps*e_tag``; ``val``/``eps`` may themselves be Duals of older tags.

    ``eps`` may be a numpy vector to carry several tangent directions at once.
    """

    __slots__ = ("val", "eps", "tag")

    def __init__(self, val, eps, tag: int):
        self.val = val
        self.eps = eps
        self.tag = tag

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r}, tag={self.tag})"

    def __eq__(self, other):
        return (isinstance(other, Dual) and self.tag == other.tag
                and _eq(self.val, other.val) and _eq(self.eps, other.eps))

    __hash__ = None

    def __add__(self, o):
        return _add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return _sub(self, o)

    def __rsub__(self, o):
        return _sub(o, self)

    def __mul__(self, o):
        return _mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return _div(self, o)

    def __rtruediv__(self, o):
        return _div(o, self)

    def __neg__(self):
        return Dual(-self.val, -self.eps, self.tag)


def _eq(a, b):
    return bool(np.all(a == b))


Scalar = Union[float, np.ndarray, Dual]


def dual(value, tangent=1.0) -> Dual:
    """A fresh dual number seeded with ``tangent``."""
    return Dual(value, tangent, next(_tags))


def _tag(x) -> int:
    return x.tag if isinstance(x, Dual) else -1


def _split(x, t):
    if isinstance(x, Dual) and x.tag == t:
        return x.val, x.eps
    return x, 0.0


def _primal(x):
    while isinstance(x, Dual):
        x = x.val
    return x


def _add(a, b):
    t = max(_tag(a), _tag(b))
    if t < 0:
        return a + b
    a0, a1 = _split(a, t)
    b0, b1 = _split(b, t)
    return Dual(_add(a0, b0), _add(a1, b1), t)


def _sub(a, b):
    t = max(_tag(a), _tag(b))
    if t < 0:
        return a - b
    a0, a1 = _split(a, t)
    b0, b1 = _split(b, t)
    return Dual(_sub(a0, b0), _sub(a1, b1), t)


def _mul(a, b):
    t = max(_tag(a), _tag(b))
    if t < 0:
        return a * b
    a0, a1 = _split(a, t)
    b0, b1 = _split(b, t)
    return Dual(_mul(a0, b0), _add(_mul(a0, b1), _mul(a1, b0)), t)


def _div(a, b):
    if np.any(_primal(b) == 0):
        raise _Domain("division by zero")
    t = max(_tag(a), _tag(b))
    if t < 0:
        return a / b
    a0, a1 = _split(a, t)
    b0, b1 = _split(b, t)
    q = _div(a0, b0)
    return Dual(q, _div(_sub(a1, _mul(q, b1)), b0), t)


def _real_pow(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        a_arr, b_arr = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        if np.any((a_arr < 0) & (b_arr != np.round(b_arr))):
            raise _Domain("negative base with non-integer exponent")
        if np.any((a_arr == 0) & (b_arr < 0)):
            raise _Domain("zero to a negative power")
        return np.power(a_arr, b_arr)
    if a < 0 and b != round(b):
        raise _Domain("negative base with non-integer exponent")
    if a == 0 and b < 0:
        raise _Domain("zero to a negative power")
    try:
        return math.pow(a, b)
    except OverflowError:
        return math.inf


def _pow(a, b):
    t = max(_tag(a), _tag(b))
    if t < 0:
        return _real_pow(a, b)
    a0, a1 = _split(a, t)
    b0, b1 = _split(b, t)
    val = _pow(a0, b0)
    if _tag(b) != t:
        # exponent is constant along this direction
        return Dual(val, _mul(_mul(b0, _pow(a0, _sub(b0, 1.0))), a1), t)
    if np.any(_primal(a0) <= 0):
        raise _Domain("non-positive base with varying exponent")
    lg = _apply("log", a0)
    d = _mul(val, _add(_mul(b1, lg), _div(_mul(b0, a1), a0)))
    return Dual(val, d, t)


def _real_fn(op, x):
    arr = isinstance(x, np.ndarray)
    if op == "log":
        if np.any(x <= 0):
            raise _Domain("log of non-positive value")
        return np.log(x) if arr else math.log(x)
    if op == "sqrt":
        if np.any(x < 0):
            raise _Domain("sqrt of negative value")
        return np.sqrt(x) if arr else math.sqrt(x)
    if op == "asin":
        if np.any(np.abs(x) > 1):
            raise _Domain("asin outside [-1, 1]")
        return np.arcsin(x) if arr else math.asin(x)
    if op == "exp":
        if arr:
            with np.errstate(over="ignore"):
                return np.exp(x)
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf
    if arr:
        return {"sin": np.sin, "cos": np.cos, "tanh": np.tanh, "atan": np.arctan}[op](x)
    return {"sin": math.sin, "cos": math.cos, "tanh": math.tanh, "atan": math.atan}[op](x)


def _apply(op: str, x):
    if op == "neg":
        return -x
    if not isinstance(x, Dual):
        return _real_fn(op, x)
    v, e, t = x.val, x.eps, x.tag
    if op == "sin":
        return Dual(_apply("sin", v), _mul(_apply("cos", v), e), t)
    if op == "cos":
        return Dual(_apply("cos", v), _mul(-_apply("sin", v), e), t)
    if op == "exp":
        ev = _apply("exp", v)
        return Dual(ev, _mul(ev, e), t)
    if op == "log":
        return Dual(_apply("log", v), _div(e, v), t)
    if op == "sqrt":
        s = _apply("sqrt", v)
        if np.any(_primal(s) == 0):
            raise _Domain("derivative of sqrt at zero")
        return Dual(s, _div(e, _mul(2.0, s)), t)
    if op == "tanh":
        th = _apply("tanh", v)
        return Dual(th, _mul(_sub(1.0, _mul(th, th)), e), t)
    if op == "asin":
        w = _sub(1.0, _mul(v, v))
        if np.any(_primal(w) <= 0):
            raise _Domain("derivative of asin at |x| = 1")
        return Dual(_apply("asin", v), _div(e, _apply("sqrt", w)), t)
    if op == "atan":
        return Dual(_apply("atan", v), _div(e, _add(1.0, _mul(v, v))), t)
    raise ValueError(op)


# --------------------------------------------------------------------------
# evaluation

_BINARY = {"+": _add, "-": _sub, "*": _mul, "/": _div, "^": _pow}


def evaluate(e: Expr, env: Mapping[str, Scalar]) -> Scalar:
    """Value of ``e`` with variables bound by ``env`` (floats, arrays or duals)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}", e.pos) from None
    if isinstance(e, Binary):
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        try:
            return _BINARY[e.op](a, b)
        except _Domain as exc:
            raise EvalError(str(exc), e.pos) from None
    if isinstance(e, Unary):
        a = evaluate(e.arg, env)
        try:
            return _apply(e.op, a)
        except _Domain as exc:
            raise EvalError(str(exc), e.pos) from None
    if isinstance(e, Deriv):
        if e.var not in env:
            raise EvalError(f"unbound variable {e.var!r}", e.pos)
        t = next(_tags)
        inner = dict(env)
        inner[e.var] = Dual(env[e.var], 1.0, t)
        r = evaluate(e.arg, inner)
        if isinstance(r, Dual) and r.tag == t:
            return r.eps
        return 0.0
    if isinstance(e, Subst):
        inner = dict(env)
        for name, sub_e in e.bindings:
            inner[name] = evaluate(sub_e, env)
        return evaluate(e.arg, inner)
    raise TypeError(f"not an expression node: {type(e).__name__}")


def grad(e: Expr, env: Mapping[str, Scalar], names: Sequence[str]) -> np.ndarray:
    """Exact partials of ``e`` with respect to ``names`` (one dual pass each)."""
    out = []
    for name in names:
        if name not in env:
            raise EvalError(f"unbound variable {name!r}")
        out.append(evaluate(Deriv(e, name), env))
    return np.array(out, dtype=float)


def second_partial(e: Expr, env: Mapping[str, Scalar], v1: str, v2: str) -> float:
    # differentiate in a canonical order so the result is symmetric bit-for-bit
    a, b = sorted((v1, v2))
    return float(evaluate(Deriv(Deriv(e, b), a), env))
