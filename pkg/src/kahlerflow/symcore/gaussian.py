"""Exact complex-rational coefficients.

Floats are converted with ``Fraction(float)``, i.e. to the exact binary value,
so that coefficient arithmetic never rounds.
"""

from __future__ import annotations

import numbers
from fractions import Fraction


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        return Fraction(int(value))
    if isinstance(value, numbers.Integral):
        return Fraction(int(value))
    if isinstance(value, numbers.Real):
        f = float(value)
        if f != f or f in (float("inf"), float("-inf")):
            raise ValueError(f"non-finite constant {value!r}")
        return Fraction(f)
    raise TypeError(f"cannot convert {value!r} to a rational")


_ZERO = Fraction(0)


def _make(re: Fraction, im: Fraction) -> "GaussianRational":
    # trusted constructor: both parts are already Fractions
    g = object.__new__(GaussianRational)
    g.re, g.im, g._hash = re, im, None
    return g


class GaussianRational:
    """Number ``re + i*im`` with ``re, im`` rational."""

    __slots__ = ("re", "im", "_hash")

    def __init__(self, re=0, im=0):
        self.re = _frac(re)
        self.im = _frac(im)
        self._hash = None

    @classmethod
    def coerce(cls, value) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, numbers.Complex) and not isinstance(value, numbers.Real):
            return cls(value.real, value.imag)
        return cls(value)

    def is_zero(self) -> bool:
        return not self.re and not self.im

    def is_one(self) -> bool:
        return self.re == 1 and self.im == 0

    def is_real(self) -> bool:
        return self.im == 0

    def is_integer(self) -> bool:
        return self.im == 0 and self.re.denominator == 1

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def __add__(self, other):
        o = other if type(other) is GaussianRational else GaussianRational.coerce(other)
        if not self.im and not o.im:
            return _make(self.re + o.re, _ZERO)
        return _make(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return _make(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-GaussianRational.coerce(other))

    def __rsub__(self, other):
        return GaussianRational.coerce(other) - self

    def __mul__(self, other):
        o = other if type(other) is GaussianRational else GaussianRational.coerce(other)
        if not self.im:
            return _make(self.re * o.re, self.re * o.im if o.im else _ZERO)
        if not o.im:
            return _make(self.re * o.re, self.im * o.re)
        return _make(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def inverse(self) -> "GaussianRational":
        den = self.re * self.re + self.im * self.im
        if den == 0:
            raise ZeroDivisionError("inverse of zero constant")
        return GaussianRational(self.re / den, -self.im / den)

    def __truediv__(self, other):
        return self * GaussianRational.coerce(other).inverse()

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) * self.inverse()

    def __pow__(self, k: int):
        if not isinstance(k, int):
            raise TypeError("only integer powers of constants are exact")
        base = self if k >= 0 else self.inverse()
        if not base.im:
            return _make(base.re ** abs(k), _ZERO)
        result = GaussianRational(1)
        for _ in range(abs(k)):
            result = result * base
        return result

    def __eq__(self, other):
        if isinstance(other, GaussianRational):
            return self.re == other.re and self.im == other.im
        if isinstance(other, numbers.Number):
            try:
                return self == GaussianRational.coerce(other)
            except (TypeError, ValueError):
                return False
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.re, self.im))
        return self._hash

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        return f"GaussianRational({self.re}, {self.im})"

    def sign_key(self) -> int:
        """+1 if the leading nonzero component is positive, -1 if negative."""
        if self.re != 0:
            return 1 if self.re > 0 else -1
        if self.im != 0:
            return 1 if self.im > 0 else -1
        return 0

    def to_source(self) -> str:
        """Python literal evaluating to this value (double precision)."""
        if self.im == 0:
            return repr(float(self.re))
        return f"complex({float(self.re)!r}, {float(self.im)!r})"

    def __str__(self):
        def fmt(q: Fraction) -> str:
            return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"

        if self.im == 0:
            return fmt(self.re)
        if self.re == 0:
            return "i" if self.im == 1 else f"{fmt(self.im)}*i"
        return f"({fmt(self.re)} + {fmt(self.im)}*i)"


ZERO = GaussianRational(0)
ONE = GaussianRational(1)
I = GaussianRational(0, 1)
