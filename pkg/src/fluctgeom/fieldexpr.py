"""A small expression language for scalar fields.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | NAME | NAME '(' args ')' | '(' expr ')'

Variables are ``x1..xn`` (coordinates) and ``t1..tm`` (control parameters);
constants ``pi`` and ``e``; functions exp, log, sqrt, sin, cos, tan, erf,
erfc, abs (one argument) and min, max (two arguments).

Evaluation works on floats and on numpy arrays alike.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .charts import ControlParams, Point, as_params
from .errors import DomainError, FluctGeomError

__all__ = [
    "ParseError", "UnknownIdentifierError", "ArityError", "FieldDomainError",
    "Num", "Var", "Const", "Neg", "BinOp", "Call", "FieldExpression", "EvalContext",
    "parse_field", "eval_field", "print_field",
]


class ParseError(FluctGeomError, ValueError):
    """Syntax error with a 1-based line and column."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UnknownIdentifierError(ParseError):
    pass


class ArityError(ParseError):
    pass


class FieldDomainError(DomainError):
    """Argument outside a function's real domain; carries the subexpression."""

    def __init__(self, message, subexpression):
        super().__init__(f"{message}: {subexpression}")
        self.subexpression = subexpression


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # 'x' or 't'
    index: int  # 1-based


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Union[Num, Var, Const, Neg, BinOp, Call]

CONSTANTS = {"pi": math.pi, "e": math.e}
ARITY = {
    "exp": 1, "log": 1, "sqrt": 1, "sin": 1, "cos": 1, "tan": 1,
    "erf": 1, "erfc": 1, "abs": 1, "min": 2, "max": 2,
}


@dataclass(frozen=True)
class FieldExpression:
    root: Node
    nx: int
    ntheta: int
    source: str = ""

    def __call__(self, x, theta=None):
        return _eval(self.root, np.asarray(x, dtype=float), as_params(theta).array)

    def __str__(self):
        return print_field(self)


@dataclass(frozen=True)
class EvalContext:
    x: Point
    theta: ControlParams


_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|"
    r"(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),])"
)


def _tokenize(src: str):
    pos, line, col = 0, 1, 1
    out = []
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        elif kind != "ws":
            out.append((kind, text, line, col))
        if kind != "nl":
            col += len(text)
        pos = m.end()
    out.append(("end", "", line, col))
    return out


class _Parser:
    def __init__(self, src, nx, ntheta):
        self.toks = _tokenize(src)
        self.i = 0
        self.nx, self.ntheta = nx, ntheta

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.take()
        if tok[1] != text:
            found = tok[1] or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", tok[2], tok[3])
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected {tok[1]!r}", tok[2], tok[3])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, line, col = self.take()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ParseError(f"literal {text!r} overflows", line, col)
            return Num(value)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[1] == "(":
                if text not in ARITY:
                    raise UnknownIdentifierError(f"unknown function {text!r}", line, col)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != ARITY[text]:
                    raise ArityError(f"{text} takes {ARITY[text]} argument(s), got {len(args)}", line, col)
                return Call(text, tuple(args))
            if text in CONSTANTS:
                return Const(text)
            m = re.fullmatch(r"([xt])([1-9]\d*)", text)
            if m:
                kind_, idx = m.group(1), int(m.group(2))
                limit = self.nx if kind_ == "x" else self.ntheta
                if idx <= limit:
                    return Var(kind_, idx)
            if text in ARITY:
                raise ArityError(f"function {text!r} used without arguments", line, col)
            raise UnknownIdentifierError(f"unknown identifier {text!r}", line, col)
        found = text or "end of input"
        raise ParseError(f"unexpected {found!r}", line, col)


def parse_field(source: str, nx: int, ntheta: int = 0) -> FieldExpression:
    """Parse ``source`` into an expression over x1..x{nx} and t1..t{ntheta}."""
    if not source or not source.strip():
        raise ParseError("empty expression", 1, 1)
    return FieldExpression(_Parser(source, nx, ntheta).parse(), nx, ntheta, source)


def _print(node: Node) -> str:
    # Canonical form: every compound subexpression is parenthesized.
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Neg):
        return f"(-{_print(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_print(node.left)} {node.op} {_print(node.right)})"
    return f"{node.func}({', '.join(_print(a) for a in node.args)})"


def print_field(e: Union[FieldExpression, Node]) -> str:
    return _print(e.root if isinstance(e, FieldExpression) else e)


def _check(cond, msg, node):
    if np.any(cond):
        raise FieldDomainError(msg, _print(node))


def _eval(node: Node, x: np.ndarray, t: np.ndarray):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Var):
        if node.kind == "x":
            return x[..., node.index - 1]
        return t[node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, x, t)
    if isinstance(node, BinOp):
        a = _eval(node.left, x, t)
        b = _eval(node.right, x, t)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            _check(np.asarray(b) == 0, "division by zero", node)
            return np.divide(a, b)
        a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        _check((a_arr < 0) & (b_arr != np.round(b_arr)), "negative base with non-integer exponent", node)
        _check((a_arr == 0) & (b_arr < 0), "zero to a negative power", node)
        return np.power(a_arr, b_arr)
    args = [np.asarray(_eval(a, x, t), dtype=float) for a in node.args]
    f = node.func
    if f == "log":
        _check(args[0] <= 0, "log of a non-positive argument", node)
        return np.log(args[0])
    if f == "sqrt":
        _check(args[0] < 0, "sqrt of a negative argument", node)
        return np.sqrt(args[0])
    if f == "min":
        return np.minimum(args[0], args[1])
    if f == "max":
        return np.maximum(args[0], args[1])
    table = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "tan": np.tan,
             "erf": special.erf, "erfc": special.erfc, "abs": np.abs}
    with np.errstate(over="ignore"):
        return table[f](args[0])


def eval_field(e: FieldExpression, ctx: EvalContext) -> float:
    """Evaluate at a single point; domain violations raise instead of returning NaN."""
    x = ctx.x.array
    if x.size != e.nx:
        raise DomainError(f"expression expects {e.nx} coordinates, got {x.size}")
    theta = as_params(ctx.theta)
    if len(theta) < e.ntheta:
        raise DomainError(f"expression expects {e.ntheta} control parameters, got {len(theta)}")
    return float(_eval(e.root, x, theta.array))
