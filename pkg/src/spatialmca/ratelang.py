"""A small expression language for rate laws.

Rate laws are written as plain arithmetic over species concentrations and
named constants, e.g. ``"k_k*(kappa_k*Y - YP)"``. The grammar is::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary ("^" ["-"] NUMBER)?
    primary := NUMBER | FUNC "(" expr ")" | NAME | "(" expr ")"

with ``FUNC`` one of ``exp``, ``tanh``, ``coth``, ``sqrt``. Trees are
immutable and evaluate on floats or numpy arrays alike, so the solver can
evaluate one law over every mesh cell in a single call.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import RateDivisionByZero, RateSyntaxError, UnboundIdentifier, UnknownIdentifier

FUNCTIONS = ("exp", "tanh", "coth", "sqrt")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Sym:
    name: str
    is_species: bool
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "RateExpr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "RateExpr"
    right: "RateExpr"
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Pow:
    base: "RateExpr"
    exponent: float


@dataclass(frozen=True)
class Call:
    func: str
    arg: "RateExpr"


RateExpr = Union[Num, Sym, Neg, BinOp, Pow, Call]

ZERO = Num(0.0)
ONE = Num(1.0)

# -- lexer -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise RateSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, species: frozenset, constants: frozenset):
        self.tokens = _tokenize(text)
        self.i = 0
        self.species = species
        self.constants = constants

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, text, pos = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise RateSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> RateExpr:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise RateSyntaxError(f"unexpected {text!r}", pos)
        return node

    def expr(self) -> RateExpr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.take()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self) -> RateExpr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            node = BinOp(op, node, self.unary(), pos)
        return node

    def unary(self) -> RateExpr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> RateExpr:
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            sign = 1.0
            if self.peek()[:2] == ("op", "-"):
                self.take()
                sign = -1.0
            kind, text, pos = self.take()
            if kind != "num":
                raise RateSyntaxError("exponent must be a numeric literal", pos)
            return Pow(base, sign * float(text))
        return base

    def primary(self) -> RateExpr:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS and self.peek()[:2] == ("op", "("):
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in self.species:
                return Sym(text, True, pos)
            if text in self.constants:
                return Sym(text, False, pos)
            raise UnknownIdentifier(text, pos)
        if (kind, text) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise RateSyntaxError(f"unexpected {found}", pos)


def parse_rate(text: str, species: Iterable[str] = (), constants: Iterable[str] = ()) -> RateExpr:
    """Parse a rate law.

    Every identifier must be declared either as a species or as a constant;
    species win if a name is declared as both.
    """
    if not text or not text.strip():
        raise RateSyntaxError("empty expression", 0)
    return _Parser(text, frozenset(species), frozenset(constants)).parse()


# -- printing ----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: RateExpr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def to_text(node: RateExpr) -> str:
    """Render a tree with the minimal parentheses needed to parse it back."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        return "-" + (f"({inner})" if _prec(node.operand) < 3 else inner)
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left = to_text(node.left)
        right = to_text(node.right)
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left}{node.op}{right}"
    if isinstance(node, Pow):
        base = to_text(node.base)
        if _prec(node.base) < 5:
            base = f"({base})"
        return f"{base}^{float(node.exponent)!r}"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(f"not a rate expression: {node!r}")


# -- evaluation --------------------------------------------------------------


def _coth(x):
    return 1.0 / np.tanh(x)


_FUNC_IMPL = {"exp": np.exp, "tanh": np.tanh, "coth": _coth, "sqrt": np.sqrt}


def eval_rate(expr: RateExpr, conc: Mapping[str, object], consts: Mapping[str, float] = {}):
    """Evaluate ``expr``; concentrations may be scalars or equally-shaped arrays."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Sym):
        table = conc if expr.is_species else consts
        try:
            return table[expr.name]
        except KeyError:
            raise UnboundIdentifier(expr.name) from None
    if isinstance(expr, Neg):
        return -eval_rate(expr.operand, conc, consts)
    if isinstance(expr, BinOp):
        a = eval_rate(expr.left, conc, consts)
        b = eval_rate(expr.right, conc, consts)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise RateDivisionByZero(expr.pos)
        return a / b
    if isinstance(expr, Pow):
        return np.power(eval_rate(expr.base, conc, consts), expr.exponent)
    if isinstance(expr, Call):
        return _FUNC_IMPL[expr.func](eval_rate(expr.arg, conc, consts))
    raise TypeError(f"not a rate expression: {expr!r}")


def eval_magnitude(expr: RateExpr, conc: Mapping[str, object], consts: Mapping[str, float] = {}):
    """Evaluate with every sum replaced by a sum of magnitudes.

    Gives a natural size for an expression whose value may cancel to zero,
    e.g. ``k*(a - b)`` at ``a == b`` has magnitude ``|k|*(|a| + |b|)``.
    """
    if isinstance(expr, Neg):
        return eval_magnitude(expr.operand, conc, consts)
    if isinstance(expr, BinOp) and expr.op in "+-":
        return eval_magnitude(expr.left, conc, consts) + eval_magnitude(expr.right, conc, consts)
    if isinstance(expr, BinOp) and expr.op == "*":
        return eval_magnitude(expr.left, conc, consts) * eval_magnitude(expr.right, conc, consts)
    return np.abs(eval_rate(expr, conc, consts))


def symbols(expr: RateExpr) -> set[Sym]:
    if isinstance(expr, Sym):
        return {expr}
    if isinstance(expr, Num):
        return set()
    if isinstance(expr, (Neg,)):
        return symbols(expr.operand)
    if isinstance(expr, BinOp):
        return symbols(expr.left) | symbols(expr.right)
    if isinstance(expr, Pow):
        return symbols(expr.base)
    return symbols(expr.arg)


def species_of(expr: RateExpr) -> set[str]:
    return {s.name for s in symbols(expr) if s.is_species}


# -- differentiation ---------------------------------------------------------


def _is(node: RateExpr, value: float) -> bool:
    return isinstance(node, Num) and node.value == value


def _neg(a: RateExpr) -> RateExpr:
    if _is(a, 0.0):
        return ZERO
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _add(a: RateExpr, b: RateExpr) -> RateExpr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a: RateExpr, b: RateExpr) -> RateExpr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a: RateExpr, b: RateExpr) -> RateExpr:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if isinstance(a, Neg):
        return _neg(_mul(a.operand, b))
    if isinstance(b, Neg):
        return _neg(_mul(a, b.operand))
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a: RateExpr, b: RateExpr, pos: int) -> RateExpr:
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return BinOp("/", a, b, pos)


def diff_rate(expr: RateExpr, wrt: str) -> RateExpr:
    """Analytic partial derivative with respect to species ``wrt``.

    Only trivial identities (``0*x``, ``1*x``, ``x+0`` ...) are folded.
    """
    if isinstance(expr, Num):
        return ZERO
    if isinstance(expr, Sym):
        return ONE if (expr.is_species and expr.name == wrt) else ZERO
    if isinstance(expr, Neg):
        return _neg(diff_rate(expr.operand, wrt))
    if isinstance(expr, BinOp):
        a, b = expr.left, expr.right
        da, db = diff_rate(a, wrt), diff_rate(b, wrt)
        if expr.op == "+":
            return _add(da, db)
        if expr.op == "-":
            return _sub(da, db)
        if expr.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        # quotient rule
        first = _div(da, b, expr.pos)
        if _is(db, 0.0):
            return first
        return _sub(first, _div(_mul(a, db), _mul(b, b), expr.pos))
    if isinstance(expr, Pow):
        du = diff_rate(expr.base, wrt)
        if _is(du, 0.0):
            return ZERO
        n = expr.exponent
        if n == 1.0:
            return du
        inner = expr.base if n - 1.0 == 1.0 else Pow(expr.base, n - 1.0)
        return _mul(_mul(Num(n), inner), du)
    if isinstance(expr, Call):
        du = diff_rate(expr.arg, wrt)
        if _is(du, 0.0):
            return ZERO
        if expr.func == "exp":
            return _mul(expr, du)
        if expr.func in ("tanh", "coth"):
            return _mul(_sub(ONE, Pow(expr, 2.0)), du)
        return _div(du, _mul(Num(2.0), expr), -1)
    raise TypeError(f"not a rate expression: {expr!r}")
