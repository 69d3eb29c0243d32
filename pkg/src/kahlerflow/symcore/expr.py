"""Immutable expression trees over real coordinate symbols.

Coordinates are always real; complex quantities are built from them together
with complex constants.  Conjugation therefore only acts on constants, and
``normalize`` removes every ``Conj`` node.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Tuple

import numpy as np

from . import poly as _poly
from .gaussian import GaussianRational
from .poly import Poly


class UnknownSymbolError(KeyError):
    """Raised when an operation references a coordinate that is not declared."""

    def __str__(self):
        return f"unknown symbol {self.args[0]!r}"


class EvaluationError(ArithmeticError):
    pass


def _coerce(value) -> "Expr":
    if isinstance(value, Expr):
        return value
    if isinstance(value, (numbers.Number, GaussianRational)):
        return Const(GaussianRational.coerce(value))
    if isinstance(value, str):
        return Sym(value)
    raise TypeError(f"cannot build an expression from {value!r}")


class Expr:
    """Base class.  Subclasses are frozen dataclasses."""

    __array_priority__ = 1000

    # operator sugar --------------------------------------------------------
    def __add__(self, other):
        return Add((self, _coerce(other)))

    def __radd__(self, other):
        return Add((_coerce(other), self))

    def __sub__(self, other):
        return Add((self, Mul((Const(GaussianRational(-1)), _coerce(other)))))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __neg__(self):
        return Mul((Const(GaussianRational(-1)), self))

    def __mul__(self, other):
        return Mul((self, _coerce(other)))

    def __rmul__(self, other):
        return Mul((_coerce(other), self))

    def __truediv__(self, other):
        if isinstance(other, (numbers.Number, GaussianRational)):
            return Mul((self, Const(GaussianRational.coerce(other).inverse())))
        return Mul((self, Pow(_coerce(other), -1)))

    def __rtruediv__(self, other):
        return Mul((_coerce(other), Pow(self, -1)))

    def __pow__(self, k):
        if not isinstance(k, numbers.Integral):
            raise TypeError("only integer powers are supported")
        return Pow(self, int(k))

    # canonical form ----------------------------------------------------------
    @cached_property
    def poly(self) -> Poly:
        return self._to_poly()

    def _to_poly(self) -> Poly:  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def free_symbols(self) -> frozenset:
        return frozenset(self.poly.free_symbols())

    def is_zero(self) -> bool:
        return self.poly.is_zero()

    def __str__(self):
        return self._str(0)

    def _str(self, prec: int) -> str:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Expr):
    value: GaussianRational

    def _to_poly(self):
        return Poly.const(self.value)

    def _str(self, prec):
        s = str(self.value)
        if prec > 0 and (s.startswith("-") or "/" in s) and not s.startswith("("):
            return f"({s})"
        return s


@dataclass(frozen=True)
class Sym(Expr):
    name: str

    def _to_poly(self):
        return Poly.symbol(self.name)

    def _str(self, prec):
        return self.name


@dataclass(frozen=True)
class Add(Expr):
    terms: Tuple[Expr, ...]

    def _to_poly(self):
        out = Poly({})
        for t in self.terms:
            out = out + t.poly
        return out

    def _str(self, prec):
        s = " + ".join(t._str(1) for t in self.terms)
        return f"({s})" if prec > 0 else s


@dataclass(frozen=True)
class Mul(Expr):
    factors: Tuple[Expr, ...]

    def _to_poly(self):
        out = Poly.const(1)
        for f in self.factors:
            out = out * f.poly
        return out

    def _str(self, prec):
        s = "*".join(f._str(2) for f in self.factors)
        return f"({s})" if prec > 2 else s


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exp: int

    def _to_poly(self):
        base, e = self.base, self.exp
        while isinstance(base, Pow):  # (b^j)^k = b^(jk) for integer exponents
            base, e = base.base, base.exp * e
        return base.poly ** e

    def _str(self, prec):
        e = str(self.exp) if self.exp >= 0 else f"({self.exp})"
        return f"{self.base._str(3)}^{e}"


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in _poly.FUNCTIONS:
            raise ValueError(f"unsupported function {self.name!r}")

    def _to_poly(self):
        return _poly.function(self.name, self.arg.poly)

    def _str(self, prec):
        return f"{self.name}({self.arg._str(0)})"


@dataclass(frozen=True)
class Conj(Expr):
    arg: Expr

    def _to_poly(self):
        return _poly.conjugate(self.arg.poly)

    def _str(self, prec):
        return f"conj({self.arg._str(0)})"


# constructors ----------------------------------------------------------------

def sym(name: str) -> Sym:
    return Sym(name)


def symbols(names: str | Iterable[str]) -> Tuple[Sym, ...]:
    if isinstance(names, str):
        names = names.replace(",", " ").split()
    return tuple(Sym(n) for n in names)


def const(value) -> Const:
    return Const(GaussianRational.coerce(value))


I = Const(GaussianRational(0, 1))


def sin(e) -> Func:
    return Func("sin", _coerce(e))


def cos(e) -> Func:
    return Func("cos", _coerce(e))


def exp(e) -> Func:
    return Func("exp", _coerce(e))


def conjugate(e) -> Expr:
    return Conj(_coerce(e))


# Poly <-> Expr -----------------------------------------------------------------

def _atom_expr(atom: _poly.Atom) -> Expr:
    if atom.kind == "sym":
        return Sym(atom.name)
    if atom.kind == "fn":
        return Func(atom.name, from_poly(atom.arg))
    return Pow(from_poly(atom.arg), -1)


def from_poly(p: Poly) -> Expr:
    """Canonical tree for a ``Poly``; the image of ``normalize``."""
    if p.is_zero():
        return Const(GaussianRational(0))
    terms = []
    for m, c in p.sorted_terms():
        factors = [] if (c.is_one() and m) else [Const(c)]
        for atom, e in m:
            base = _atom_expr(atom)
            if atom.kind == "inv":
                factors.append(base if e == 1 else Pow(base.base, -e))
            else:
                factors.append(base if e == 1 else Pow(base, e))
        terms.append(factors[0] if len(factors) == 1 else Mul(tuple(factors)))
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


# public operations ---------------------------------------------------------------

def normalize(e) -> Expr:
    """Canonical form: flattened, like monomials collected, constants folded.

    Idempotent.  Two polynomial-trigonometric expressions that are equal as
    polynomials in their atoms normalize to structurally equal trees.
    """
    e = _coerce(e)
    p = e.poly
    out = from_poly(p)
    out.__dict__["poly"] = p
    return out


def differentiate(e, x, coordinates: Iterable[str] | None = None) -> Expr:
    """Exact partial derivative with respect to the coordinate ``x``.

    When ``coordinates`` is given, ``x`` must be one of them.
    """
    e = _coerce(e)
    name = x.name if isinstance(x, Sym) else x
    if coordinates is not None and name not in set(coordinates):
        raise UnknownSymbolError(name)
    out = from_poly(_poly.derivative(e.poly, name))
    return out


def substitute(e, bindings: Mapping) -> Expr:
    """Simultaneous substitution of symbols; unbound symbols are untouched."""
    e = _coerce(e)
    if not bindings:
        return e
    b = {(k.name if isinstance(k, Sym) else k): _coerce(v).poly for k, v in bindings.items()}
    return from_poly(_poly.substitute(e.poly, b))


@lru_cache(maxsize=8192)
def _compiled(p: Poly, symbols: Tuple[str, ...]):
    return _poly.compile_poly(p, symbols)


def compile_expr(e, symbols: Iterable[str]):
    """Vectorised numerical callable ``f(*values)`` in the given symbol order."""
    e = _coerce(e)
    symbols = tuple(symbols)
    missing = e.free_symbols - set(symbols)
    if missing:
        raise UnknownSymbolError(sorted(missing)[0])
    return _compiled(e.poly, symbols)


def evaluate(e, point: Mapping[str, object]):
    """Evaluate at a point (values may be real, complex or numpy arrays).

    Returns a complex scalar or a complex array.  Raises ``EvaluationError`` on
    non-finite results.
    """
    e = _coerce(e)
    names = tuple(sorted(e.free_symbols))
    for n in names:
        if n not in point:
            raise UnknownSymbolError(n)
    fn = _compiled(e.poly, names)
    with np.errstate(all="ignore"):
        try:
            val = fn(*(point[n] for n in names))
        except (ZeroDivisionError, OverflowError) as exc:
            raise EvaluationError(str(exc)) from exc
    out = np.asarray(val, dtype=complex)
    shape = np.broadcast_shapes(*(np.shape(point[n]) for n in names)) if names else ()
    if out.shape != shape:
        out = np.broadcast_to(out, shape).copy()
    if not np.all(np.isfinite(out)):
        raise EvaluationError(f"non-finite value while evaluating {e}")
    return complex(out) if out.ndim == 0 else out


def structurally_equal(a, b) -> bool:
    return normalize(a) == normalize(b)
