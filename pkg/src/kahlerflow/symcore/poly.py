"""Canonical form used by ``normalize``: Laurent polynomials over atoms.

An atom is a coordinate symbol, an elementary function (sin, cos, exp) of a
canonical argument, or the reciprocal of a canonical multi-term sum.  A
``Poly`` maps monomials (sorted tuples of ``(atom, exponent)``) to exact
``GaussianRational`` coefficients.  Two expressions that agree as polynomials
in their atoms have identical ``Poly`` keys.  No trigonometric identities are
applied.
"""

from __future__ import annotations

from typing import Callable, Dict, Iterable, Mapping, Tuple

import numpy as np

from .gaussian import ONE, ZERO, GaussianRational

FUNCTIONS = ("sin", "cos", "exp")


class Atom:
    __slots__ = ("kind", "name", "arg", "key", "_hash")

    def __init__(self, kind: str, name: str | None, arg: "Poly | None"):
        self.kind = kind
        self.name = name
        self.arg = arg
        if kind == "sym":
            self.key = "s:" + name
        elif kind == "fn":
            self.key = f"f:{name}({arg.key})"
        else:
            self.key = f"r:({arg.key})"
        self._hash = hash(self.key)

    def __eq__(self, other):
        return isinstance(other, Atom) and self.key == other.key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Atom({self.key})"


Mono = Tuple[Tuple[Atom, int], ...]


def _mono_key(m: Mono) -> str:
    return "*".join(f"{a.key}^{e}" for a, e in m)


def _mono_mul(a: Mono, b: Mono) -> Mono:
    if not a:
        return b
    if not b:
        return a
    exps: Dict[Atom, int] = dict(a)
    for atom, e in b:
        exps[atom] = exps.get(atom, 0) + e
    return tuple(sorted(((k, v) for k, v in exps.items() if v != 0), key=lambda t: t[0].key))


class Poly:
    __slots__ = ("terms", "_key", "_hash")

    def __init__(self, terms: Dict[Mono, GaussianRational]):
        self.terms = terms
        self._key = None
        self._hash = None

    # construction -------------------------------------------------------
    @staticmethod
    def const(c) -> "Poly":
        c = GaussianRational.coerce(c)
        return Poly({} if c.is_zero() else {(): c})

    @staticmethod
    def symbol(name: str) -> "Poly":
        return Poly({((Atom("sym", name, None), 1),): ONE})

    @staticmethod
    def from_atom(atom: Atom, e: int = 1) -> "Poly":
        return Poly({((atom, e),): ONE})

    # identity -------------------------------------------------------------
    @property
    def key(self) -> str:
        if self._key is None:
            items = sorted((_mono_key(m), c) for m, c in self.terms.items())
            self._key = " + ".join(f"[{c.re},{c.im}]{k}" for k, c in items) or "0"
        return self._key

    def __eq__(self, other):
        return isinstance(other, Poly) and self.key == other.key

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.key)
        return self._hash

    def __repr__(self):
        return f"Poly({self.key})"

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda mc: _mono_key(mc[0]))

    def is_zero(self) -> bool:
        return not self.terms

    def constant_value(self) -> GaussianRational | None:
        if not self.terms:
            return ZERO
        if len(self.terms) == 1 and () in self.terms:
            return self.terms[()]
        return None

    # arithmetic -------------------------------------------------------------
    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m)
            s = c if s is None else s + c
            if s.is_zero():
                out.pop(m, None)
            else:
                out[m] = s
        return Poly(out)

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def scale(self, c) -> "Poly":
        c = GaussianRational.coerce(c)
        if c.is_zero():
            return Poly({})
        return Poly({m: v * c for m, v in self.terms.items()})

    def __mul__(self, other: "Poly") -> "Poly":
        out: Dict[Mono, GaussianRational] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                s = out.get(m)
                v = c1 * c2
                s = v if s is None else s + v
                if s.is_zero():
                    out.pop(m, None)
                else:
                    out[m] = s
        return Poly(out)

    def __pow__(self, k: int) -> "Poly":
        if k == 0:
            return Poly.const(1)
        if k < 0:
            return inverse(self) ** (-k)
        if len(self.terms) == 1:
            (m, c), = self.terms.items()
            return Poly({tuple((a, e * k) for a, e in m): c ** k})
        result = Poly.const(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # structure ------------------------------------------------------------
    def atoms(self) -> set:
        out = set()
        for m in self.terms:
            for a, _ in m:
                out.add(a)
        return out

    def free_symbols(self) -> set:
        out = set()
        for a in self.atoms():
            if a.kind == "sym":
                out.add(a.name)
            else:
                out |= a.arg.free_symbols()
        return out

    def has_negative_powers(self) -> bool:
        """True when some monomial carries a negative exponent or reciprocal."""
        for m in self.terms:
            for a, e in m:
                if e < 0 or a.kind == "inv":
                    return True
                if a.kind == "fn" and a.arg.has_negative_powers():
                    return True
        return False


def _add_into(dst: Dict[Mono, GaussianRational], p: Poly) -> None:
    for m, c in p.terms.items():
        s = dst.get(m)
        s = c if s is None else s + c
        if s.is_zero():
            dst.pop(m, None)
        else:
            dst[m] = s


def _leading_coeff(p: Poly) -> GaussianRational:
    return p.sorted_terms()[0][1]


def function(name: str, arg: Poly) -> Poly:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if arg.is_zero():
        return Poly.const(0 if name == "sin" else 1)
    sign = 1
    if name in ("sin", "cos") and _leading_coeff(arg).sign_key() < 0:
        arg = -arg
        sign = -1 if name == "sin" else 1
    return Poly.from_atom(Atom("fn", name, arg)).scale(sign)


def inverse(p: Poly) -> Poly:
    if p.is_zero():
        raise ZeroDivisionError("reciprocal of an expression that normalizes to zero")
    if len(p.terms) == 1:
        (m, c), = p.terms.items()
        return Poly({tuple((a, -e) for a, e in m): c.inverse()})
    lead = _leading_coeff(p)
    base = p.scale(lead.inverse())
    return Poly.from_atom(Atom("inv", None, base)).scale(lead.inverse())


def _atom_poly(atom: Atom) -> Poly:
    return Poly.from_atom(atom)


def _atom_derivative(atom: Atom, x: str) -> Poly:
    if atom.kind == "sym":
        return Poly.const(1 if atom.name == x else 0)
    da = derivative(atom.arg, x)
    if da.is_zero():
        return da
    if atom.kind == "inv":
        return -(da * Poly.from_atom(atom, 2))
    if atom.name == "sin":
        return function("cos", atom.arg) * da
    if atom.name == "cos":
        return -(function("sin", atom.arg) * da)
    return _atom_poly(atom) * da


def derivative(p: Poly, x: str) -> Poly:
    out: Dict[Mono, GaussianRational] = {}
    cache: Dict[Atom, Poly] = {}
    for m, c in p.terms.items():
        for idx, (atom, e) in enumerate(m):
            da = cache.get(atom)
            if da is None:
                da = cache[atom] = _atom_derivative(atom, x)
            if da.is_zero():
                continue
            rest = list(m)
            if e == 1:
                rest.pop(idx)
            else:
                rest[idx] = (atom, e - 1)
            _add_into(out, Poly({tuple(rest): c * e}) * da)
    return Poly(out)


def map_atoms(p: Poly, fn: Callable[[Atom], Poly], coeff: Callable = lambda c: c) -> Poly:
    """Rebuild ``p`` with every atom replaced by ``fn(atom)``."""
    out: Dict[Mono, GaussianRational] = {}
    images: Dict[Atom, Poly] = {}
    for m, c in p.terms.items():
        term = Poly.const(coeff(c))
        for atom, e in m:
            img = images.get(atom)
            if img is None:
                img = images[atom] = fn(atom)
            term = term * (img ** e)
        _add_into(out, term)
    return Poly(out)


def conjugate(p: Poly) -> Poly:
    def conj_atom(atom: Atom) -> Poly:
        if atom.kind == "sym":
            return _atom_poly(atom)
        if atom.kind == "fn":
            return function(atom.name, conjugate(atom.arg))
        return inverse(conjugate(atom.arg))

    return map_atoms(p, conj_atom, lambda c: c.conjugate())


def substitute(p: Poly, bindings: Mapping[str, Poly]) -> Poly:
    if not bindings or not (p.free_symbols() & set(bindings)):
        return p

    def sub_atom(atom: Atom) -> Poly:
        if atom.kind == "sym":
            return bindings.get(atom.name, _atom_poly(atom))
        if atom.kind == "fn":
            return function(atom.name, substitute(atom.arg, bindings))
        return inverse(substitute(atom.arg, bindings))

    return map_atoms(p, sub_atom)


# numerical compilation -----------------------------------------------------

_NP_FUNCS = {"sin": "_np.sin", "cos": "_np.cos", "exp": "_np.exp"}


class _Emitter:
    def __init__(self, varnames: Mapping[str, str]):
        self.varnames = varnames
        self.lines: list[str] = []
        self.atom_names: Dict[Atom, str] = {}

    def atom(self, atom: Atom) -> str:
        if atom.kind == "sym":
            return self.varnames[atom.name]
        name = self.atom_names.get(atom)
        if name is not None:
            return name
        inner = self.poly(atom.arg)
        name = f"_a{len(self.atom_names)}"
        if atom.kind == "fn":
            self.lines.append(f"    {name} = {_NP_FUNCS[atom.name]}({inner})")
        else:
            self.lines.append(f"    {name} = 1.0 / ({inner})")
        self.atom_names[atom] = name
        return name

    def poly(self, p: Poly) -> str:
        if p.is_zero():
            return "0.0"
        parts = []
        for m, c in p.sorted_terms():
            factors = [c.to_source()] if not (c.is_one() and m) else []
            for a, e in m:
                s = self.atom(a)
                factors.append(s if e == 1 else f"{s}**({e})")
            parts.append("*".join(factors))
        return " + ".join(f"({t})" for t in parts)


def compile_poly(p: Poly, symbols: Iterable[str]) -> Callable:
    """Compile to ``f(*values)`` following the order of ``symbols``.

    Works elementwise on numpy arrays and on scalars.
    """
    symbols = list(symbols)
    varnames = {s: f"_v{k}" for k, s in enumerate(symbols)}
    em = _Emitter(varnames)
    body = em.poly(p)
    args = ", ".join(varnames[s] for s in symbols)
    src = "\n".join([f"def _f({args}):", *em.lines, f"    return {body}"])
    namespace = {"_np": np}
    exec(src, namespace)
    fn = namespace["_f"]
    fn.__source__ = src
    return fn
