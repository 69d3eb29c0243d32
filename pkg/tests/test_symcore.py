from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import polynomials, trig_polynomials
from kahlerflow.symcore import (
    I,
    EvaluationError,
    ExprSyntaxError,
    GaussianRational,
    GridSpec,
    UnknownSymbolError,
    conjugate,
    const,
    cos,
    differentiate,
    evaluate,
    exp,
    normalize,
    parse,
    sin,
    structurally_equal,
    substitute,
    symbols,
)

x, y, t, r = symbols("x y t r")


def test_differentiate_polynomial():
    assert structurally_equal(differentiate(x * y**2, "y"), 2 * x * y)


def test_differentiate_chain_rule():
    d = differentiate(sin(2 * t * x * y), "x", coordinates=("x", "y", "t"))
    assert structurally_equal(d, 2 * t * y * cos(2 * t * x * y))


def test_differentiate_constant():
    assert differentiate(const(3 + 2j), "x").is_zero()


def test_differentiate_unknown_symbol_names_it():
    with pytest.raises(UnknownSymbolError, match="z"):
        differentiate(x * y, "z", coordinates=("x", "y"))


def test_substitute_examples():
    assert structurally_equal(substitute(x + I * y, {"x": x + r * y}), x + r * y + I * y)
    e = x * x + 3 * y
    assert substitute(e, {}) is e
    (tau,) = symbols("tau")
    assert structurally_equal(substitute(x**2, {"x": x + tau * y}), x**2 + 2 * tau * x * y + tau**2 * y**2)


def test_evaluate_examples():
    tau0, tau = 1j, 1
    assert evaluate(x + const(tau0 + tau) * y, {"x": 1, "y": 2}) == 3 + 2j
    assert evaluate(conjugate(x + I * y), {"x": 1, "y": 1}) == 1 - 1j
    kappa = cos(2 * t * x * y) * (x**2 + y**2) / 2 + t * x**2 * y**2
    assert evaluate(kappa, {"x": 1, "y": 1, "t": 0}) == 1


def test_evaluate_errors():
    with pytest.raises(UnknownSymbolError):
        evaluate(x + y, {"x": 1.0})
    with pytest.raises(EvaluationError):
        evaluate(exp(x), {"x": 1e6})


def test_evaluate_broadcasts():
    v = evaluate(x * y, {"x": np.arange(3.0), "y": 2.0})
    np.testing.assert_allclose(v, [0, 2, 4])


def test_normalize_examples():
    assert normalize(x * y - y * x).is_zero()
    assert normalize((x + y) ** 2 - x**2 - 2 * x * y - y**2).is_zero()
    assert normalize(conjugate(x + I * y) - (x - I * y)).is_zero()


def test_normalize_does_not_apply_trig_identities():
    e = normalize(sin(x) ** 2 + cos(x) ** 2 - 1)
    assert not e.is_zero()
    assert abs(evaluate(e, {"x": 0.7})) < 1e-15


def test_odd_even_canonical_signs():
    assert normalize(sin(-x) + sin(x)).is_zero()
    assert normalize(cos(-2 * x) - cos(2 * x)).is_zero()


def test_reciprocal_of_sum():
    e = normalize(1 / (x + y))
    assert e.poly.has_negative_powers()
    assert abs(evaluate(e * (x + y), {"x": 0.3, "y": 0.9}) - 1) < 1e-15
    assert normalize(differentiate(1 / (x + y), "x") + 1 / (x + y) ** 2).is_zero()


def test_gaussian_rationals_are_exact():
    a = GaussianRational(0.1)
    assert a * 10 != 1  # binary value of 0.1, not 1/10
    assert GaussianRational(1, 2) * GaussianRational(1, -2) == 5
    assert str(GaussianRational(0, 1)) == "i"


def test_parser_roundtrip_and_precedence():
    e = parse("2*x^2 - i*y + sin(x*y)/3 + conj(i*x)")
    assert structurally_equal(e, 2 * x**2 - I * y + sin(x * y) / 3 - I * x)
    assert structurally_equal(parse("-x^2"), -(x**2))
    assert structurally_equal(parse("x**3"), x**3)
    assert structurally_equal(parse(str(normalize(e))), e)


def test_parser_decimals_are_exact():
    assert parse("0.1").poly.constant_value() == GaussianRational(Fraction(1, 10))


@pytest.mark.parametrize("text,col", [("x + * y", 5), ("sin(x", 6), ("x^y", 2), ("x $ y", 3)])
def test_parser_errors_report_position(text, col):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text)
    assert info.value.line == 1
    assert info.value.column == col


def test_parser_multiline_position():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x +\n  )")
    assert (info.value.line, info.value.column) == (2, 3)


def test_grid_spec():
    g = GridSpec.box(("x", "y"), -1, 1, 3)
    assert g.size == 9 and g.shape == (3, 3)
    m = g.mesh()
    assert m.shape == (2, 9)
    np.testing.assert_allclose(m[:, 1], [-1, 0])  # last coordinate fastest
    with pytest.raises(ValueError):
        GridSpec(("x",), ((1, 1),), (3,))
    with pytest.raises(ValueError):
        GridSpec(("x",), ((0, 1),), (1,))


# ---------------------------------------------------------------------------
# properties

_pts = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


@settings(max_examples=60, deadline=None)
@given(polynomials(), polynomials())
def test_leibniz(f, g):
    lhs = differentiate(f * g, "x")
    rhs = differentiate(f, "x") * g + f * differentiate(g, "x")
    assert structurally_equal(lhs, rhs)


@settings(max_examples=60, deadline=None)
@given(trig_polynomials())
def test_mixed_partials_commute(e):
    assert structurally_equal(differentiate(differentiate(e, "x"), "y"), differentiate(differentiate(e, "y"), "x"))


@settings(max_examples=60, deadline=None)
@given(trig_polynomials(), trig_polynomials(), _pts)
def test_evaluation_homomorphism(f, g, p):
    pt = {"x": p[0], "y": p[1]}
    a = evaluate(f * g, pt)
    b = evaluate(f, pt) * evaluate(g, pt)
    assert abs(a - b) <= 1e-14 * max(1.0, abs(b)) * 8


_rational_pts = st.tuples(*[st.fractions(-2, 2, max_denominator=16)] * 2)


@settings(max_examples=60, deadline=None)
@given(polynomials(), polynomials(), _rational_pts)
def test_substitute_then_evaluate(f, g, p):
    # exact over the rationals, so no rounding slack is needed
    px, py = const(p[0]), const(p[1])
    a = substitute(substitute(f, {"x": g}), {"x": px, "y": py})
    gx = substitute(g, {"x": px, "y": py})
    b = substitute(f, {"x": gx, "y": py})
    assert a.poly.constant_value() == b.poly.constant_value()


@settings(max_examples=60, deadline=None)
@given(trig_polynomials())
def test_normalize_idempotent(e):
    n1 = normalize(e)
    assert normalize(n1) == n1


@settings(max_examples=60, deadline=None)
@given(trig_polynomials())
def test_conjugation_is_an_involution(e):
    e = e * (1 + 2 * I)
    assert structurally_equal(conjugate(conjugate(e)), e)


@settings(max_examples=40, deadline=None)
@given(trig_polynomials(), _pts)
def test_derivative_matches_central_difference(e, p):
    h = 1e-6
    d = evaluate(differentiate(e, "x"), {"x": p[0], "y": p[1]})
    fd = (evaluate(e, {"x": p[0] + h, "y": p[1]}) - evaluate(e, {"x": p[0] - h, "y": p[1]})) / (2 * h)
    assert abs(d - fd) <= 1e-5 * max(1.0, abs(d))
