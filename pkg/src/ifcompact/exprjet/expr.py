"""Expression trees for scalar fields of (x, y): parsing, printing, evaluation.

Grammar (whitespace ignored)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" INTEGER)?
    atom    := NUMBER | "x" | "y" | "pi" | NAME "(" expr ")" | "(" expr ")"

So ``^`` binds tighter than unary minus (``-x^2`` is ``-(x^2)``), which binds
tighter than ``*`` and ``/``.  Exponents must be non-negative integer
literals.  Subtraction is stored as ``Add(left, Neg(right))``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class ArityError(ExprError):
    def __init__(self, name: str, expected: int, got: int, offset: int):
        super().__init__(f"{name} takes {expected} argument(s), got {got} (offset {offset})")
        self.offset = offset


class DomainError(ArithmeticError):
    """Raised instead of producing NaN or inf."""


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
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, Add, Mul, Div, Pow, Call]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")
VARIABLES = ("x", "y")


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind == "end":
            what = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", off)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                right = self.term()
                left = Add(left, right) if text == "+" else Add(left, Neg(right))
            else:
                return left

    def term(self) -> Expr:
        left = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                right = self.unary()
                left = Mul(left, right) if text == "*" else Div(left, right)
            else:
                return left

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            kind, text, off = self.take()
            if kind != "num" or not text.isdigit():
                raise ExprSyntaxError("exponent must be a non-negative integer literal", off)
            return Pow(base, int(text))
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, off)
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ArityError(text, 1, len(args), off)
                return Call(text, args[0])
            if text in VARIABLES:
                return Var(text)
            if text == "pi":
                return Num(math.pi)
            if text in FUNCTIONS:
                raise ArityError(text, 1, 0, off)
            raise UnknownIdentifierError(text, off)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {what}", off)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises ExprSyntaxError (with ``offset``), UnknownIdentifierError or
    ArityError.
    """
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# printer

_PREC = {Add: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expr) -> int:
    return _PREC.get(type(e), 5)


def _fmt_num(v: float) -> str:
    if v == math.pi:
        return "pi"
    if float(v).is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def to_text(e: Expr) -> str:
    """Print ``e`` with the minimal parentheses needed for parse(print(e)) == e."""
    if isinstance(e, Num):
        s = _fmt_num(e.value)
        return f"({s})" if e.value < 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        base = to_text(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, Add):
        left = to_text(e.left)
        if isinstance(e.right, Neg):
            right = to_text(e.right.arg)
            if _prec(e.right.arg) <= 1:
                right = f"({right})"
            return f"{left} - {right}"
        right = to_text(e.right)
        if _prec(e.right) <= 1:
            right = f"({right})"
        return f"{left} + {right}"
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        left = to_text(e.left)
        if _prec(e.left) < 2:
            left = f"({left})"
        right = to_text(e.right)
        if _prec(e.right) <= 2:
            right = f"({right})"
        return f"{left} {op} {right}"
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# pointwise evaluation

def _check(ok, message: str):
    if not np.all(ok):
        raise DomainError(message)


def eval_expr(e: Expr, x, y):
    """Evaluate at scalar or array coordinates (broadcasting)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = _eval(e, x, y)
    out = np.broadcast_to(out, np.broadcast(x, y).shape)
    return float(out) if out.ndim == 0 else np.array(out)


def _eval(e: Expr, x, y):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        return x if e.name == "x" else y
    if isinstance(e, Neg):
        return -_eval(e.arg, x, y)
    if isinstance(e, Add):
        return _eval(e.left, x, y) + _eval(e.right, x, y)
    if isinstance(e, Mul):
        return _eval(e.left, x, y) * _eval(e.right, x, y)
    if isinstance(e, Div):
        den = _eval(e.right, x, y)
        _check(den != 0, "division by zero")
        return _eval(e.left, x, y) / den
    if isinstance(e, Pow):
        return _eval(e.base, x, y) ** e.exponent
    if isinstance(e, Call):
        v = _eval(e.arg, x, y)
        if e.func == "sqrt":
            _check(v >= 0, "sqrt of a negative number")
            return np.sqrt(v)
        if e.func == "log":
            _check(v > 0, "log of a non-positive number")
            return np.log(v)
        if e.func == "tan":
            _check(np.cos(v) != 0, "tan at a pole")
        return getattr(np, e.func)(v)
    raise TypeError(f"not an expression node: {e!r}")


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg, Call)):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.left) | variables(e.right)
