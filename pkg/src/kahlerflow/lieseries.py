"""Derivations, Hamiltonian vector fields and truncated Lie series.

The Lie series of a vector field ``X`` applied to ``f`` is

    e^{tau X} . f = sum_k tau^k X^k(f) / k!

and is stored through order ``N`` as a ``TauSeries``.  Hamiltonian fields use
the convention ``i_{X_h} omega = dh``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple

import numpy as np

from .symcore import Expr, GaussianRational, compile_expr, conjugate, normalize
from .symcore import poly as _poly
from .symcore.expr import UnknownSymbolError, _coerce, from_poly

TAU = "tau"
TAUBAR = "taubar"
DEFAULT_ORDER = 12


class SymplecticError(ValueError):
    pass


@dataclass(frozen=True)
class Derivation:
    """Vector field ``X = sum_k a^k d/dx^k`` with expression components."""

    coords: Tuple[str, ...]
    components: Tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        comps = tuple(normalize(c) for c in self.components)
        if len(comps) != len(self.coords):
            raise ValueError("component count must equal coordinate count")
        object.__setattr__(self, "components", comps)

    def __call__(self, f) -> Expr:
        p = _coerce(f).poly
        out = _poly.Poly({})
        for x, a in zip(self.coords, self.components):
            if a.is_zero():
                continue
            d = _poly.derivative(p, x)
            if not d.is_zero():
                out = out + a.poly * d
        return from_poly(out)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def bracket(self, other: "Derivation") -> "Derivation":
        """Lie bracket ``[self, other] = L_self other``."""
        if self.coords != other.coords:
            raise ValueError("derivations live on different coordinates")
        comps = [normalize(self(b) - other(a)) for a, b in zip(self.components, other.components)]
        return Derivation(self.coords, tuple(comps))

    def scale(self, c) -> "Derivation":
        return Derivation(self.coords, tuple(normalize(a * c) for a in self.components))

    def __add__(self, other: "Derivation") -> "Derivation":
        return Derivation(self.coords, tuple(normalize(a + b) for a, b in zip(self.components, other.components)))

    def evaluate(self, point: Mapping[str, object]) -> np.ndarray:
        fns = [compile_expr(c, self.coords) for c in self.components]
        vals = [point[x] for x in self.coords]
        return np.array([np.broadcast_to(np.asarray(f(*vals), dtype=complex), np.shape(vals[0])) for f in fns])


@dataclass(frozen=True)
class SymplecticForm:
    """``omega = sum_{j<k} W_jk dx^j ^ dx^k`` with ``W`` antisymmetric."""

    coords: Tuple[str, ...]
    matrix: Tuple[Tuple[Expr, ...], ...]

    def __post_init__(self):
        coords = tuple(self.coords)
        rows = tuple(tuple(normalize(_coerce(v)) for v in row) for row in self.matrix)
        n = len(coords)
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError("matrix shape must match the coordinates")
        for j in range(n):
            for k in range(n):
                if not normalize(rows[j][k] + rows[k][j]).is_zero():
                    raise SymplecticError(f"matrix is not antisymmetric at ({j}, {k})")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "matrix", rows)

    @classmethod
    def darboux(cls, pairs: Sequence[Tuple[str, str]], coords: Sequence[str] | None = None):
        """``sum dq ^ dp`` over the given (q, p) pairs."""
        coords = tuple(coords) if coords is not None else tuple(c for pair in pairs for c in pair)
        idx = {c: k for k, c in enumerate(coords)}
        n = len(coords)
        W = [[0] * n for _ in range(n)]
        for q, p in pairs:
            W[idx[q]][idx[p]] = 1
            W[idx[p]][idx[q]] = -1
        return cls(coords, tuple(tuple(r) for r in W))

    def is_constant(self) -> bool:
        return all(v.poly.constant_value() is not None for row in self.matrix for v in row)

    def exact_matrix(self):
        if not self.is_constant():
            raise NotImplementedError("only constant symplectic forms are supported")
        return [[v.poly.constant_value() for v in row] for row in self.matrix]

    def numeric(self) -> np.ndarray:
        return np.array([[complex(c) for c in row] for row in self.exact_matrix()]).real

    def pair(self, u: Sequence[Expr], v: Sequence[Expr]) -> Expr:
        """``omega(u, v)`` for vector fields given by component lists."""
        out = 0
        for j, a in enumerate(u):
            for k, b in enumerate(v):
                w = self.matrix[j][k]
                if not w.is_zero():
                    out = out + a * w * b
        return normalize(out)


def _exact_inverse(M):
    """Gauss-Jordan inverse over the Gaussian rationals."""
    n = len(M)
    A = [list(row) + [GaussianRational(1 if i == j else 0) for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        piv = next((r for r in range(col, n) if not A[r][col].is_zero()), None)
        if piv is None:
            raise SymplecticError("symplectic form is singular")
        A[col], A[piv] = A[piv], A[col]
        inv = A[col][col].inverse()
        A[col] = [v * inv for v in A[col]]
        for r in range(n):
            if r != col and not A[r][col].is_zero():
                f = A[r][col]
                A[r] = [a - f * b for a, b in zip(A[r], A[col])]
    return [row[n:] for row in A]


def poisson_tensor(omega: SymplecticForm):
    """Exact ``P`` with ``X_h = P grad h``, i.e. ``P = W^{-T}``."""
    W = omega.exact_matrix()
    Winv = _exact_inverse(W)
    n = len(W)
    return [[Winv[k][j] for k in range(n)] for j in range(n)]


def hamiltonian_field(h, omega: SymplecticForm) -> Derivation:
    """Hamiltonian vector field with ``i_{X_h} omega = dh``."""
    h = _coerce(h)
    P = poisson_tensor(omega)
    grads = [_poly.derivative(h.poly, x) for x in omega.coords]
    comps = []
    for row in P:
        acc = _poly.Poly({})
        for c, g in zip(row, grads):
            if not c.is_zero() and not g.is_zero():
                acc = acc + g.scale(c)
        comps.append(from_poly(acc))
    return Derivation(omega.coords, tuple(comps))


@dataclass(frozen=True)
class TauSeries:
    """Truncated series ``sum_{k<=N} c_k tau^k`` (or ``taubar^k``)."""

    tag: str
    coeffs: Tuple[Expr, ...]

    def __post_init__(self):
        if self.tag not in (TAU, TAUBAR):
            raise ValueError(f"unknown series variable {self.tag!r}")
        object.__setattr__(self, "coeffs", tuple(normalize(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValueError("a series needs at least one coefficient")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def free_symbols(self) -> frozenset:
        out = frozenset()
        for c in self.coeffs:
            out |= c.free_symbols
        return out

    def map(self, fn) -> "TauSeries":
        return TauSeries(self.tag, tuple(fn(c) for c in self.coeffs))

    def __add__(self, other: "TauSeries") -> "TauSeries":
        if self.tag != other.tag:
            raise ValueError("series variables differ")
        n = min(self.order, other.order)
        return TauSeries(self.tag, tuple(a + b for a, b in zip(self.coeffs[: n + 1], other.coeffs[: n + 1])))

    def scale(self, c) -> "TauSeries":
        return self.map(lambda a: a * c)

    def terminates(self) -> bool:
        """True when the last coefficient is exactly zero (finite Lie series)."""
        return self.coeffs[-1].is_zero()

    def compiled(self, coords: Sequence[str]):
        return [compile_expr(c, coords) for c in self.coeffs]


def lie_exp(X: Derivation, f, N: int = DEFAULT_ORDER) -> TauSeries:
    """Coefficients ``X^k(f)/k!`` for ``k = 0..N`` by exact differentiation."""
    if N < 0:
        raise ValueError("order must be nonnegative")
    c = normalize(f)
    coeffs = [c]
    for k in range(N):
        c = from_poly(X(c).poly.scale(GaussianRational(1, 0) / (k + 1)))
        coeffs.append(c)
    return TauSeries(TAU, tuple(coeffs))


def _point_values(coords: Sequence[str], point):
    if isinstance(point, Mapping):
        try:
            return [point[x] for x in coords]
        except KeyError as exc:
            raise UnknownSymbolError(exc.args[0]) from None
    vals = list(point)
    if len(vals) != len(coords):
        raise ValueError(f"expected {len(coords)} coordinate values")
    return vals


def eval_coefficients(s: TauSeries, point: Mapping[str, object], coords: Sequence[str] | None = None):
    coords = tuple(coords) if coords is not None else tuple(sorted(s.free_symbols()))
    vals = _point_values(coords, point)
    shape = np.broadcast_shapes(*(np.shape(v) for v in vals)) if vals else ()
    out = []
    with np.errstate(all="ignore"):
        for fn in s.compiled(coords):
            out.append(np.broadcast_to(np.asarray(fn(*vals), dtype=complex), shape))
    return out


def horner(values, tau):
    acc = values[-1]
    for c in reversed(values[:-1]):
        acc = acc * tau + c
    return acc


def eval_series(s: TauSeries, tau, point, coords: Sequence[str] | None = None):
    """Partial sum through order ``N``; uses ``conj(tau)`` for ``taubar`` series."""
    t = np.conj(tau) if s.tag == TAUBAR else tau
    vals = eval_coefficients(s, point, coords)
    with np.errstate(all="ignore"):
        out = horner(vals, t)
    out = np.asarray(out, dtype=complex)
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("non-finite series value")
    return complex(out) if out.ndim == 0 else out


def conjugate_series(s: TauSeries) -> TauSeries:
    return TauSeries(TAUBAR if s.tag == TAU else TAU, tuple(conjugate(c) for c in s.coeffs))


def series_product(a: TauSeries, b: TauSeries) -> TauSeries:
    """Cauchy product truncated to ``min(N_a, N_b)``."""
    if a.tag != b.tag:
        raise ValueError("cannot multiply series in tau and taubar")
    n = min(a.order, b.order)
    coeffs = []
    for m in range(n + 1):
        acc = _poly.Poly({})
        for k in range(m + 1):
            acc = acc + a.coeffs[k].poly * b.coeffs[m - k].poly
        coeffs.append(from_poly(acc))
    return TauSeries(a.tag, tuple(coeffs))


INCONCLUSIVE = "inconclusive"


def estimate_radius(s: TauSeries, point, coords: Sequence[str] | None = None):
    """Root-test estimate of the convergence radius in ``tau`` at a point.

    Uses the trailing ``ceil(N/2)`` coefficients.  Returns ``inf`` for a
    terminating series and for factorially decaying coefficients (entire
    case, detected by ``|c_k|^{1/k}`` falling off at least like ``k^{-1/2}``),
    and ``"inconclusive"`` when every sampled coefficient vanishes at the
    point although the series does not terminate.
    """
    N = s.order
    if N < 4:
        raise ValueError("radius estimate needs order >= 4")
    if s.terminates() and all(c.is_zero() for c in s.coeffs[N - math.ceil(N / 2) + 1:]):
        return math.inf
    vals = eval_coefficients(s, point, coords)
    ks = list(range(N - math.ceil(N / 2) + 1, N + 1))
    roots = []
    for k in ks:
        m = float(np.max(np.abs(vals[k])))
        if m > 0:
            roots.append((k, m ** (1.0 / k)))
    if not roots:
        return INCONCLUSIVE
    if len(roots) >= 3:
        lk = np.log([k for k, _ in roots])
        lr = np.log([r for _, r in roots])
        slope = np.polyfit(lk, lr, 1)[0]
        if slope <= -0.5:
            return math.inf
    return 1.0 / max(r for _, r in roots)
