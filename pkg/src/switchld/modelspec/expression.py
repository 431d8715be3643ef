"""Closed-form expressions for potentials and switching rates.

Grammar (standard precedence, ``^`` binds tightest, then unary minus, then
``* /``, then ``+ -``; binary operators are left-associative)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" exponent)*
    exponent:= ["-"] INT | "(" ["-"] INT ")"
    atom    := NUMBER | "pi" | VAR | FUNC "(" expr ")" | "(" expr ")"

Exponents are integer literals so every expression has a closed-form
derivative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..errors import EvaluationError, ExpressionError

FUNCTIONS = ("sin", "cos", "exp", "log")


def variables_for(dimension: int) -> tuple[str, ...]:
    if dimension == 1:
        return ("x", "y")
    if dimension == 2:
        return ("x1", "x2", "y1", "y2")
    raise ValueError(f"dimension must be 1 or 2, got {dimension}")


def slow_names(dimension: int) -> tuple[str, ...]:
    return ("x",) if dimension == 1 else ("x1", "x2")


def fast_names(dimension: int) -> tuple[str, ...]:
    return ("y",) if dimension == 1 else ("y1", "y2")


# --------------------------------------------------------------------------
# AST


class Expr:
    """Base class of expression nodes (immutable, hashable, comparable)."""

    def __str__(self):
        return to_source(self)

    def children(self) -> tuple["Expr", ...]:
        return ()

    def variables(self) -> frozenset[str]:
        out: set[str] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.name)
            stack.extend(node.children())
        return frozenset(out)


@dataclass(frozen=True, repr=False)
class Num(Expr):
    value: float

    def __repr__(self):
        return f"Num({self.value!r})"


@dataclass(frozen=True, repr=False)
class Pi(Expr):
    def __repr__(self):
        return "Pi()"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, repr=False)
class Unary(Expr):
    arg: Expr
    symbol = ""

    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"{type(self).__name__}({self.arg!r})"


class Neg(Unary):
    symbol = "-"


class Sin(Unary):
    symbol = "sin"


class Cos(Unary):
    symbol = "cos"


class Exp(Unary):
    symbol = "exp"


class Log(Unary):
    symbol = "log"


@dataclass(frozen=True, repr=False)
class Binary(Expr):
    left: Expr
    right: Expr
    symbol = ""

    def children(self):
        return (self.left, self.right)

    def __repr__(self):
        return f"{type(self).__name__}({self.left!r}, {self.right!r})"


class Add(Binary):
    symbol = "+"


class Sub(Binary):
    symbol = "-"


class Mul(Binary):
    symbol = "*"


class Div(Binary):
    symbol = "/"


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    base: Expr
    exponent: int

    def children(self):
        return (self.base,)

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exponent})"


UNARY_BY_NAME = {"sin": Sin, "cos": Cos, "exp": Exp, "log": Log}


# --------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num" | "name" | "op" | "end"
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str, allowed: tuple[str, ...]):
        self.source = source
        self.allowed = allowed
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def error(self, message, pos=None):
        raise ExpressionError(message, self.tok.pos if pos is None else pos, self.source)

    def expect(self, text):
        if self.tok.text != text or self.tok.kind == "end":
            what = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            self.error(f"syntax error: expected {text!r}, found {what}")
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            self.error(f"syntax error: unexpected {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        while self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            node = Pow(node, self.exponent())
        return node

    def exponent(self) -> int:
        paren = self.tok.kind == "op" and self.tok.text == "("
        if paren:
            self.advance()
        sign = 1
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            sign = -1
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            if t.kind == "end":
                self.error("syntax error: missing exponent")
            self.error("non-integer exponent")
        self.advance()
        if paren:
            self.expect(")")
        return sign * int(t.text)

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text))
        if t.kind == "name":
            self.advance()
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return UNARY_BY_NAME[t.text](arg)
            if t.text == "pi":
                return Pi()
            if t.text in self.allowed:
                return Var(t.text)
            self.error(f"unknown identifier {t.text!r}", t.pos)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if t.kind == "end":
            self.error("syntax error: unexpected end of input")
        self.error(f"syntax error: unexpected {t.text!r}")


def parse_expression(source: str, dimension: int) -> Expr:
    """Parse ``source`` into an AST over the variables of ``dimension``.

    Raises ExpressionError carrying the 0-based character position.
    """
    return _Parser(source, variables_for(dimension)).parse()


def substitute_params(source: str, params: Mapping[str, float]) -> str:
    """Textual replacement of named constants by their numeric values."""
    for name in sorted(params, key=len, reverse=True):
        value = float(params[name])
        source = re.sub(rf"\b{re.escape(name)}\b", f"({value!r})", source)
    return source


# --------------------------------------------------------------------------
# Printing


_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def to_source(e: Expr) -> str:
    """Render ``e`` as text that parses back to an equal expression."""
    if isinstance(e, Num):
        if e.value < 0 or math.copysign(1.0, e.value) < 0:
            return f"(-{-e.value!r})"
        return repr(e.value)
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if _prec(e.arg) <= _PREC[Neg]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Unary):
        return f"{e.symbol}({to_source(e.arg)})"
    if isinstance(e, Pow):
        base = to_source(e.base)
        if _prec(e.base) <= _PREC[Pow] and not isinstance(e.base, Pow):
            base = f"({base})"
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{base}^{exp}"
    if isinstance(e, Binary):
        p = _PREC[type(e)]
        left = to_source(e.left)
        right = to_source(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        # left-associative: equal precedence on the right needs parentheses
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.symbol} {right}"
    raise TypeError(f"not an expression: {e!r}")


def _prec(e: Expr) -> int:
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 10  # rendered parenthesised already
    return _PREC.get(type(e), 10)


# --------------------------------------------------------------------------
# Constant folding and differentiation


def _num(e: Expr) -> float | None:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Pi):
        return math.pi
    return None


def add(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return Num(va + vb)
    if va == 0:
        return b
    if vb == 0:
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return Num(va - vb)
    if vb == 0:
        return a
    if va == 0:
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return Num(va * vb)
    if va == 0 or vb == 0:
        return Num(0.0)
    if va == 1:
        return b
    if vb == 1:
        return a
    if vb is not None:
        a, b, va, vb = b, a, vb, va
    if va is not None and isinstance(b, Mul):
        inner = _num(b.left)
        if inner is not None:
            return mul(Num(va * inner), b.right)
    if va == -1:
        return neg(b)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None and vb != 0:
        return Num(va / vb)
    if va == 0 and vb != 0:
        return Num(0.0)
    if vb == 1:
        return a
    return Div(a, b)


def neg(a: Expr) -> Expr:
    va = _num(a)
    if va is not None:
        return Num(-va if va != 0 else 0.0)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, n: int) -> Expr:
    va = _num(a)
    if n == 0:
        return Num(1.0)
    if n == 1:
        return a
    if va is not None and (va != 0 or n > 0):
        return Num(va**n)
    return Pow(a, n)


def _func(cls, a: Expr) -> Expr:
    va = _num(a)
    if va is not None:
        fn = {Sin: math.sin, Cos: math.cos, Exp: math.exp, Log: math.log}[cls]
        try:
            value = fn(va)
        except (ValueError, OverflowError):
            return cls(a)
        if math.isfinite(value):
            return Num(value)
    return cls(a)


def fold(e: Expr) -> Expr:
    """Bottom-up constant folding with the 0/1 identities."""
    if isinstance(e, (Num, Var)):
        return e
    if isinstance(e, Pi):
        return Num(math.pi)
    if isinstance(e, Neg):
        return neg(fold(e.arg))
    if isinstance(e, Unary):
        return _func(type(e), fold(e.arg))
    if isinstance(e, Pow):
        return power(fold(e.base), e.exponent)
    if isinstance(e, Binary):
        builder = {Add: add, Sub: sub, Mul: mul, Div: div}[type(e)]
        return builder(fold(e.left), fold(e.right))
    raise TypeError(f"not an expression: {e!r}")


def differentiate(e: Expr, variable: str) -> Expr:
    """Symbolic first derivative of ``e`` with respect to ``variable``, folded."""
    return _d(fold(e), variable)


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, (Num, Pi)):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0 if e.name == v else 0.0)
    if isinstance(e, Neg):
        return neg(_d(e.arg, v))
    if isinstance(e, Sin):
        return mul(Cos(e.arg), _d(e.arg, v))
    if isinstance(e, Cos):
        return neg(mul(Sin(e.arg), _d(e.arg, v)))
    if isinstance(e, Exp):
        return mul(e, _d(e.arg, v))
    if isinstance(e, Log):
        return div(_d(e.arg, v), e.arg)
    if isinstance(e, Pow):
        return mul(mul(Num(float(e.exponent)), power(e.base, e.exponent - 1)), _d(e.base, v))
    if isinstance(e, Add):
        return add(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Sub):
        return sub(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Mul):
        return add(mul(_d(e.left, v), e.right), mul(e.left, _d(e.right, v)))
    if isinstance(e, Div):
        du, dw = _d(e.left, v), _d(e.right, v)
        return div(sub(mul(du, e.right), mul(e.left, dw)), power(e.right, 2))
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# Evaluation

_SCALAR_FUNCS = {Sin: math.sin, Cos: math.cos, Exp: math.exp, Log: math.log}


def _env(slow, fast) -> dict[str, float]:
    slow = np.atleast_1d(np.asarray(slow, dtype=float))
    fast = np.atleast_1d(np.asarray(fast, dtype=float))
    if slow.shape != fast.shape or slow.size not in (1, 2):
        raise ValueError("slow and fast points must both have length 1 or 2")
    d = slow.size
    env = dict(zip(slow_names(d), map(float, slow)))
    env.update(zip(fast_names(d), map(float, fast)))
    return env


def evaluate(e: Expr, slow, fast) -> float:
    """Evaluate ``e`` at a single (slow, fast) point.

    Raises EvaluationError naming the first subexpression whose value is
    not finite (log of a non-positive number, division by zero, overflow).
    """
    return _eval(e, _env(slow, fast))


def _eval(e: Expr, env) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Pi):
        return math.pi
    if isinstance(e, Var):
        return env[e.name]
    try:
        if isinstance(e, Neg):
            value = -_eval(e.arg, env)
        elif isinstance(e, Unary):
            value = _SCALAR_FUNCS[type(e)](_eval(e.arg, env))
        elif isinstance(e, Pow):
            value = _eval(e.base, env) ** e.exponent
        elif isinstance(e, Add):
            value = _eval(e.left, env) + _eval(e.right, env)
        elif isinstance(e, Sub):
            value = _eval(e.left, env) - _eval(e.right, env)
        elif isinstance(e, Mul):
            value = _eval(e.left, env) * _eval(e.right, env)
        elif isinstance(e, Div):
            value = _eval(e.left, env) / _eval(e.right, env)
        else:
            raise TypeError(f"not an expression: {e!r}")
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise EvaluationError(f"non-finite value in {to_source(e)!r} ({exc})", e) from None
    if not math.isfinite(value):
        raise EvaluationError(f"non-finite value in {to_source(e)!r}", e)
    return value


def _numpy_source(e: Expr) -> str:
    if isinstance(e, Num):
        return f"({e.value!r})"
    if isinstance(e, Pi):
        return "np.pi"
    if isinstance(e, Var):
        return f"v_{e.name}"
    if isinstance(e, Neg):
        return f"(-{_numpy_source(e.arg)})"
    if isinstance(e, Unary):
        return f"np.{e.symbol}({_numpy_source(e.arg)})"
    if isinstance(e, Pow):
        if e.exponent < 0:
            return f"(1.0 / {_numpy_source(e.base)} ** {-e.exponent})"
        return f"({_numpy_source(e.base)} ** {e.exponent})"
    if isinstance(e, Binary):
        return f"({_numpy_source(e.left)} {e.symbol} {_numpy_source(e.right)})"
    raise TypeError(f"not an expression: {e!r}")


def compile_numpy(e: Expr, dimension: int) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Vectorised evaluator ``f(slow, fast)`` for arrays of shape ``(..., d)``.

    The result has shape ``slow.shape[:-1]`` (broadcast against ``fast``).
    Non-finite entries are left in place; callers decide how to report them.
    """
    args = ", ".join(f"v_{n}" for n in variables_for(dimension))
    code = f"lambda {args}: {_numpy_source(e)}"
    raw = eval(code, {"np": np})  # noqa: S307 - source built from a validated AST
    d = dimension

    def f(slow, fast):
        slow = np.asarray(slow, dtype=float)
        fast = np.asarray(fast, dtype=float)
        shape = np.broadcast_shapes(slow.shape[:-1], fast.shape[:-1])
        cols = [slow[..., k] for k in range(d)] + [fast[..., k] for k in range(d)]
        with np.errstate(all="ignore"):
            out = raw(*cols)
        return np.broadcast_to(np.asarray(out, dtype=float), shape)

    f.source = code
    return f


def locate_nonfinite(e: Expr, slow, fast) -> EvaluationError | None:
    """Scalar re-evaluation to name the offending subexpression, if any."""
    try:
        evaluate(e, slow, fast)
    except EvaluationError as exc:
        return exc
    return None
