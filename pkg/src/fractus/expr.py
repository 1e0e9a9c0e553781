"""A small arithmetic language for right-hand sides and coefficients.

Grammar (recursive descent, one token of lookahead)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' number)?
    base   := number | ident | func '(' expr ')' | '(' expr ')' | '-' base
    ident  := 't' | 'x1' ... 'xm'
    func   := sin | cos | exp | sqrt | abs

Unary minus binds tighter than ``^`` because it is part of ``base``:
``-x1^2`` is ``(-x1)^2``.  Write ``-(x1^2)`` for the other reading.

Evaluation works on scalars and on numpy arrays alike (one row per time
node), and raises :class:`~fractus.errors.EvaluationError` instead of
returning infinities or NaNs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvaluationError, ExprSyntaxError, UnknownIdentifierError

__all__ = ["Const", "Var", "Unary", "Binary", "ExprAst", "parse_expr", "eval_expr", "to_source", "variables"]

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    """``t`` (``index=0``) or ``x<k>`` (``index=k``)."""

    name: str
    index: int


@dataclass(frozen=True)
class Unary:
    """``op`` is ``neg`` or one of the supported functions."""

    op: str
    arg: "ExprAst"


@dataclass(frozen=True)
class Binary:
    """``op`` is one of ``+ - * / ^``; for ``^`` the right operand is a :class:`Const`."""

    op: str
    left: "ExprAst"
    right: "ExprAst"


ExprAst = Union[Const, Var, Unary, Binary]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, m: int):
        self.tokens = _tokenize(src)
        self.i = 0
        self.m = m

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, text, pos = self.take()
        if kind != "op" or text != op:
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {op!r}, found {found}", pos)

    def expr(self) -> ExprAst:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> ExprAst:
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> ExprAst:
        node = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, text, pos = self.take()
            if kind != "num" or not np.isfinite(float(text)):
                raise ExprSyntaxError("the exponent of '^' must be a finite number", pos)
            node = Binary("^", node, Const(float(text)))
        return node

    def base(self) -> ExprAst:
        kind, text, pos = self.take()
        if kind == "num":
            value = float(text)
            if not np.isfinite(value):
                raise ExprSyntaxError(f"number {text} is out of range", pos)
            return Const(value)
        if kind == "id":
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Unary(text, arg)
            if text == "t":
                return Var("t", 0)
            m = re.fullmatch(r"x([1-9][0-9]*)", text)
            if m and int(m.group(1)) <= self.m:
                return Var(text, int(m.group(1)))
            raise UnknownIdentifierError(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and text == "-":
            return Unary("neg", self.base())
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def parse_expr(src: str, m: int) -> ExprAst:
    """Parse ``src`` for a state of dimension ``m`` (variables ``x1..xm`` and ``t``).

    >>> parse_expr("x1^2", 1)
    Binary(op='^', left=Var(name='x1', index=1), right=Const(value=2.0))
    """
    if m < 0:
        raise ValueError("dimension must be >= 0")
    parser = _Parser(src, m)
    node = parser.expr()
    kind, text, pos = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {text!r} after a complete expression", pos)
    return node


def variables(ast: ExprAst) -> set[str]:
    """Names of the variables occurring in ``ast``."""
    if isinstance(ast, Var):
        return {ast.name}
    if isinstance(ast, Unary):
        return variables(ast.arg)
    if isinstance(ast, Binary):
        return variables(ast.left) | variables(ast.right)
    return set()


def _finite(value, what: str):
    if not np.all(np.isfinite(value)):
        raise EvaluationError(f"{what} produced a non-finite value")
    return value


def _eval(ast: ExprAst, x, t):
    if isinstance(ast, Const):
        return ast.value
    if isinstance(ast, Var):
        if ast.index == 0:
            return t
        return x[..., ast.index - 1]
    if isinstance(ast, Unary):
        v = _eval(ast.arg, x, t)
        if ast.op == "neg":
            return -v
        if ast.op == "sqrt":
            if np.any(np.asarray(v) < 0):
                raise EvaluationError("sqrt of a negative number")
            return np.sqrt(v)
        with np.errstate(over="ignore", invalid="ignore"):
            out = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[ast.op](v)
        return _finite(out, ast.op)
    if isinstance(ast, Binary):
        lhs = _eval(ast.left, x, t)
        rhs = _eval(ast.right, x, t)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if ast.op == "+":
                out = lhs + rhs
            elif ast.op == "-":
                out = lhs - rhs
            elif ast.op == "*":
                out = lhs * rhs
            elif ast.op == "/":
                if np.any(np.asarray(rhs) == 0):
                    raise EvaluationError("division by zero")
                out = lhs / rhs
            else:
                if rhs < 0 and np.any(np.asarray(lhs) == 0):
                    raise EvaluationError("division by zero (zero to a negative power)")
                out = np.power(lhs, rhs)
        return _finite(out, f"operator {ast.op!r}")
    raise TypeError(f"not an expression node: {ast!r}")


def eval_expr(ast: ExprAst, x, t):
    """Evaluate ``ast`` at state ``x`` and time ``t``.

    ``x`` has shape ``(m,)`` or ``(N, m)``; ``t`` is a scalar or ``(N,)``.
    Returns a float or an array of shape ``(N,)``.

    >>> eval_expr(parse_expr("x1^2", 1), [3.0], 0.0)
    9.0
    """
    xa = np.asarray(x, dtype=float)
    ta = np.asarray(t, dtype=float)
    out = _finite(np.asarray(_eval(ast, xa, ta), dtype=float), "expression")
    shape = np.broadcast_shapes(xa.shape[:-1] if xa.ndim else (), ta.shape)
    out = np.broadcast_to(out, shape)
    return float(out) if out.ndim == 0 else np.array(out)


def to_source(ast: ExprAst) -> str:
    """Print ``ast`` so that :func:`parse_expr` reads it back unchanged.

    Every binary operation is parenthesized; constants use ``repr`` so that
    they round-trip exactly.
    """
    if isinstance(ast, Const):
        return repr(float(ast.value))
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Unary):
        inner = to_source(ast.arg)
        if ast.op == "neg":
            return "-" + inner
        return f"{ast.op}({inner})"
    if isinstance(ast, Binary):
        return f"({to_source(ast.left)} {ast.op} {to_source(ast.right)})"
    raise TypeError(f"not an expression node: {ast!r}")
