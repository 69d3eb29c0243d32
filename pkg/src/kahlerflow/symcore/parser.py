"""Infix syntax for expressions in config files.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'i' | NAME | NAME '(' expr ')' | '(' expr ')'

``i`` is the imaginary unit; ``^`` takes an integer exponent; the callable
names are ``sin``, ``cos``, ``exp`` and ``conj``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .expr import Conj, Const, Expr, Func, Pow, Sym, normalize
from .gaussian import GaussianRational

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^(),]))"
)
_CALLS = {"sin", "cos", "exp", "conj"}


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", *_linecol(text, start))
        kind = m.lastgroup
        out.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(_Tok("end", "", len(text)))
    return out


def _linecol(text: str, pos: int):
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.k = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.k]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ExprSyntaxError(msg, *_linecol(self.text, tok.pos))

    def eat(self, text: str):
        if self.tok.text != text:
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")
        self.k += 1

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.text in ("+", "-"):
            op = self.tok.text
            self.k += 1
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.tok.text
            self.k += 1
            rhs = self.unary()
            if op == "*":
                e = e * rhs
            else:
                c = rhs.poly.constant_value()
                e = e / c if c is not None and not c.is_zero() else e / rhs
        return e

    def unary(self) -> Expr:
        if self.tok.text == "-":
            self.k += 1
            return -self.unary()
        if self.tok.text == "+":
            self.k += 1
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.text in ("^", "**"):
            tok = self.tok
            self.k += 1
            exponent = self.unary()
            c = exponent.poly.constant_value()
            if c is None or not c.is_integer():
                self.error("exponent must be an integer constant", tok)
            return Pow(base, int(c.re))
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.k += 1
            if re.fullmatch(r"\d+", tok.text):
                return Const(GaussianRational(int(tok.text)))
            return Const(GaussianRational(Fraction(tok.text)))
        if tok.kind == "name":
            self.k += 1
            if tok.text == "i":
                return Const(GaussianRational(0, 1))
            if tok.text in _CALLS:
                self.eat("(")
                arg = self.expr()
                self.eat(")")
                return Conj(arg) if tok.text == "conj" else Func(tok.text, arg)
            return Sym(tok.text)
        if tok.text == "(":
            self.k += 1
            e = self.expr()
            self.eat(")")
            return e
        found = tok.text or "end of input"
        self.error(f"unexpected {found!r}")


def parse(text: str, *, normalized: bool = False) -> Expr:
    """Parse an expression; optionally return it normalized."""
    e = _Parser(text).parse()
    return normalize(e) if normalized else e
