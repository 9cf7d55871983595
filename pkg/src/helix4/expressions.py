"""Arithmetic expressions over x, y with exact symbolic derivatives.

Grammar (precedence low to high): ``+ -`` < ``* /`` < unary ``-`` < ``^``
(right associative), with parentheses, float literals, the variables x and y,
and the functions sin, cos, tan, exp, sqrt.  Parse and evaluation errors
carry the byte offset of the offending token, so the CLI can point at it.

Derivative trees are produced symbolically (with light constant folding) up
to the second order needed for surface jets.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

__all__ = ["Expr", "ParseError", "EvalError", "parse_expr", "scalar_jet_from_exprs"]

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
  | (?P<ws>\s+)
""", re.VERBOSE)

_FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "sqrt": math.sqrt,
}


class ParseError(ValueError):
    def __init__(self, message: str, span: int):
        super().__init__(f"{message} (at offset {span})")
        self.span = span


class EvalError(ArithmeticError):
    def __init__(self, message: str, span: int):
        super().__init__(f"{message} (at offset {span})")
        self.span = span


@dataclass(frozen=True)
class Expr:
    """Expression node: a constant, variable, unary/binary operation, or call."""

    kind: str                    # "num" | "var" | "neg" | "call" | one of "+-*/^"
    value: float = 0.0
    name: str = ""
    args: tuple = ()
    span: int = 0

    # -- construction helpers (with constant folding) --

    @staticmethod
    def num(v: float, span: int = 0) -> "Expr":
        return Expr("num", value=float(v), span=span)

    @staticmethod
    def var(name: str, span: int = 0) -> "Expr":
        return Expr("var", name=name, span=span)

    @staticmethod
    def binary(op: str, a: "Expr", b: "Expr", span: int = 0) -> "Expr":
        if a.kind == "num" and b.kind == "num":
            try:
                return Expr.num(_APPLY[op](a.value, b.value), span)
            except (ZeroDivisionError, ValueError, OverflowError):
                pass
        if op == "+":
            if a == _ZERO:
                return b
            if b == _ZERO:
                return a
        elif op == "-":
            if b == _ZERO:
                return a
            if a == _ZERO:
                return Expr.neg(b, span)
        elif op == "*":
            if a == _ZERO or b == _ZERO:
                return _ZERO
            if a == _ONE:
                return b
            if b == _ONE:
                return a
        elif op == "/":
            if a == _ZERO and not (b == _ZERO):
                return _ZERO
            if b == _ONE:
                return a
        elif op == "^":
            if b == _ONE:
                return a
            if b == _ZERO:
                return _ONE
        return Expr(op, args=(a, b), span=span)

    @staticmethod
    def neg(a: "Expr", span: int = 0) -> "Expr":
        if a.kind == "num":
            return Expr.num(-a.value, span)
        if a.kind == "neg":
            return a.args[0]
        return Expr("neg", args=(a,), span=span)

    @staticmethod
    def call(fn: str, a: "Expr", span: int = 0) -> "Expr":
        return Expr("call", name=fn, args=(a,), span=span)

    # -- evaluation --

    def eval(self, x: float = 0.0, y: float = 0.0) -> float:
        k = self.kind
        if k == "num":
            return self.value
        if k == "var":
            return x if self.name == "x" else y
        if k == "neg":
            return -self.args[0].eval(x, y)
        if k == "call":
            v = self.args[0].eval(x, y)
            if self.name == "sqrt" and v < 0:
                raise EvalError(f"sqrt of negative value {v:.6g}", self.span)
            try:
                return _FUNCTIONS[self.name](v)
            except (ValueError, OverflowError) as exc:
                raise EvalError(f"{self.name}: {exc}", self.span) from exc
        a = self.args[0].eval(x, y)
        b = self.args[1].eval(x, y)
        if k == "/" and b == 0.0:
            raise EvalError("division by zero", self.span)
        try:
            return _APPLY[k](a, b)
        except (ValueError, OverflowError) as exc:
            raise EvalError(str(exc), self.span) from exc

    # -- differentiation --

    def diff(self, var: str) -> "Expr":
        k = self.kind
        if k == "num":
            return _ZERO
        if k == "var":
            return _ONE if self.name == var else _ZERO
        if k == "neg":
            return Expr.neg(self.args[0].diff(var))
        if k == "+":
            return Expr.binary("+", self.args[0].diff(var), self.args[1].diff(var))
        if k == "-":
            return Expr.binary("-", self.args[0].diff(var), self.args[1].diff(var))
        if k == "*":
            a, b = self.args
            return Expr.binary("+",
                               Expr.binary("*", a.diff(var), b),
                               Expr.binary("*", a, b.diff(var)))
        if k == "/":
            a, b = self.args
            num = Expr.binary("-",
                              Expr.binary("*", a.diff(var), b),
                              Expr.binary("*", a, b.diff(var)))
            return Expr.binary("/", num, Expr.binary("^", b, Expr.num(2)))
        if k == "^":
            a, b = self.args
            if b.kind == "num":
                # d/dv a^n = n a^(n-1) a'
                return Expr.binary("*",
                                   Expr.binary("*", b,
                                               Expr.binary("^", a, Expr.num(b.value - 1))),
                                   a.diff(var))
            raise ParseError("derivative of a^b needs a constant exponent",
                             self.span)
        if k == "call":
            a = self.args[0]
            da = a.diff(var)
            if self.name == "sin":
                outer = Expr.call("cos", a)
            elif self.name == "cos":
                outer = Expr.neg(Expr.call("sin", a))
            elif self.name == "tan":
                outer = Expr.binary("/", _ONE,
                                    Expr.binary("^", Expr.call("cos", a), Expr.num(2)))
            elif self.name == "exp":
                outer = Expr.call("exp", a)
            elif self.name == "sqrt":
                outer = Expr.binary("/", Expr.num(0.5), Expr.call("sqrt", a))
            else:  # pragma: no cover - the parser only admits known names
                raise ParseError(f"unknown function {self.name}", self.span)
            return Expr.binary("*", outer, da)
        raise AssertionError(k)

    def variables(self) -> set[str]:
        if self.kind == "var":
            return {self.name}
        out: set[str] = set()
        for a in self.args:
            out |= a.variables()
        return out

    def __str__(self) -> str:
        k = self.kind
        if k == "num":
            return f"{self.value:g}"
        if k == "var":
            return self.name
        if k == "neg":
            return f"(-{self.args[0]})"
        if k == "call":
            return f"{self.name}({self.args[0]})"
        return f"({self.args[0]} {k} {self.args[1]})"


_ZERO = Expr("num", value=0.0)
_ONE = Expr("num", value=1.0)
_APPLY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "^": lambda a, b: a ** b,
}


def _tokenize(src: str):
    pos = 0
    out = []
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", pos)
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(src)))
    return out


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", pos)
        return self.next()

    def parse(self) -> Expr:
        e = self.sum()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", pos)
        return e

    def sum(self) -> Expr:
        e = self.product()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                e = Expr.binary(text, e, self.product(), pos)
            else:
                return e

    def product(self) -> Expr:
        e = self.unary()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                e = Expr.binary(text, e, self.unary(), pos)
            else:
                return e

    def unary(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Expr.neg(self.unary(), pos)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.next()
            return Expr.binary("^", base, self.unary(), pos)
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.next()
        if kind == "num":
            return Expr.num(float(text), pos)
        if kind == "name":
            if text in _FUNCTIONS:
                self.expect_op("(")
                arg = self.sum()
                self.expect_op(")")
                return Expr.call(text, arg, pos)
            if text in ("x", "y"):
                return Expr.var(text, pos)
            raise ParseError(f"unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            e = self.sum()
            self.expect_op(")")
            return e
        raise ParseError(f"unexpected {text!r}" if text else "unexpected end of input",
                         pos)


def parse_expr(src: str) -> Expr:
    """Parse an expression over x, y.  Raises :class:`ParseError` with the
    byte offset on malformed input."""
    return _Parser(src).parse()


def scalar_jet_from_exprs(f: Expr):
    """2-jet evaluator (v, vx, vy, vxx, vxy, vyy) with symbolic derivatives."""
    fx, fy = f.diff("x"), f.diff("y")
    fxx, fxy, fyy = fx.diff("x"), fx.diff("y"), fy.diff("y")

    def jet(x: float, y: float):
        return (f.eval(x, y), fx.eval(x, y), fy.eval(x, y),
                fxx.eval(x, y), fxy.eval(x, y), fyy.eval(x, y))

    return jet
