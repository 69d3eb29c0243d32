"""Shared strategies and independent closed-form oracles for the tests.

The oracles here are derived by hand and use only numpy; they never call
into the package under test.
"""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from kahlerflow.symcore import const, cos, exp, sin, sym

# ---------------------------------------------------------------------------
# random expressions

_coef = st.integers(-4, 4)
_deg = st.integers(0, 3)


@st.composite
def polynomials(draw, names=("x", "y"), max_terms=4):
    e = const(0)
    for _ in range(draw(st.integers(1, max_terms))):
        term = const(draw(_coef))
        for n in names:
            term = term * sym(n) ** draw(_deg)
        e = e + term
    return e


@st.composite
def trig_polynomials(draw, names=("x", "y")):
    p = draw(polynomials(names, 3))
    arg = sym(names[0]) * draw(st.integers(-2, 2)) + sym(names[-1]) * draw(st.integers(-2, 2))
    fn = draw(st.sampled_from([sin, cos, exp]))
    return p * fn(arg) + draw(polynomials(names, 2))


def random_polynomial(rng, names=("x", "y"), terms=4, max_deg=2):
    e = const(0)
    for _ in range(terms):
        term = const(int(rng.integers(-3, 4)))
        for n in names:
            term = term * sym(n) ** int(rng.integers(0, max_deg + 1))
        e = e + term
    return e


# ---------------------------------------------------------------------------
# oracles


def quartic_chart(x, y, tau):
    """``e^{tau X} (x + i y)`` for ``X = xy (x d/dx - y d/dy)``.

    ``xy`` is conserved and the flow is ``(x e^{s xy}, y e^{-s xy})``.
    """
    return x * np.exp(tau * x * y) + 1j * y * np.exp(-tau * x * y)


def quartic_kappa_it(x, y, t):
    return 0.5 * np.cos(2 * t * x * y) * (x * x + y * y) + t * x * x * y * y


def quartic_inv_g_it(x, y, t):
    return 2 * t * (x * x + y * y - 2 * x * y * np.sin(2 * t * x * y)) + 2 * np.cos(2 * t * x * y)


def linear_gamma(r, s):
    """Riemannian metric of ``dx ^ dy`` for the chart ``x + (r + i s) y``."""
    return np.array([[1.0, r], [r, s * s + r * r]]) / s


def linear_phi(y, t):
    """Potential path for ``tau0 = i``: ``-t y^2 / (1 + t)``."""
    return -t * y * y / (1 + t)
