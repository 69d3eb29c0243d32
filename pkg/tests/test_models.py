from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import quartic_chart, quartic_inv_g_it, quartic_kappa_it
from kahlerflow.kahler import KAHLER, PSEUDO_KAHLER, REAL, evolve_chart, kahler_potential, metric_at
from kahlerflow.models import (
    EPS,
    MODELS,
    REPRESENTATIONS,
    STRUCTURE,
    SU2_BASIS,
    SeparableModel,
    get_model,
    linear,
    quartic,
    random_su2,
    separable,
    separable_chart,
    separable_system,
    su2_coords,
    su2_element,
    torus_closed_form,
    torus_lie_series,
    tstark_classify,
    tstark_closed_form,
    tstark_lie_series,
    tstark_potential,
    tstark_potential_check,
    tstark_symplectic_matrix,
    tstark_torus_system,
)
from kahlerflow.symcore import GridSpec, symbols

y = symbols("y")[0]


def test_registry():
    assert set(MODELS) == {"linear", "quartic", "separable", "tstark-torus", "tstark-su2"}
    assert get_model("linear", tau0=2j).params["tau0"] == 2j
    with pytest.raises(ValueError, match="unknown model"):
        get_model("nope")


def test_linear_requires_upper_half_plane():
    with pytest.raises(ValueError):
        get_model("linear", tau0=1 - 1j).system


def test_linear_reference_metric_value():
    m = linear(1j)
    g = metric_at(evolve_chart(m.system, 2), 0.5j, (0.0, 0.0))
    assert g.value[0, 0].real == pytest.approx(m.reference["g"](0.5j))


def test_quartic_reference_matches_oracle():
    ref = quartic().reference
    p = np.array([0.3, -0.4])
    assert ref["chart"](p, 0.2j) == pytest.approx(quartic_chart(*p, 0.2j))
    assert ref["kappa_it"](p, 0.3) == pytest.approx(quartic_kappa_it(*p, 0.3))
    assert ref["inv_g_it"](p, 0.3) == pytest.approx(quartic_inv_g_it(*p, 0.3))


# ---------------------------------------------------------------------------
# separable


def test_bump_derivatives_are_consistent():
    m = SeparableModel()
    Y = np.linspace(-1.5, 1.5, 61)
    Y = Y[np.abs(Y) > 1e-3]
    h = 1e-5
    np.testing.assert_allclose(m.hp(Y), (m.h(Y + h) - m.h(Y - h)) / (2 * h), atol=1e-8)
    np.testing.assert_allclose(m.hpp(Y), (m.hp(Y + h) - m.hp(Y - h)) / (2 * h), atol=1e-6)
    assert m.h(0.0) == 0 and m.hp(0.0) == 0 and m.hpp(0.0) == 1


def test_bump_is_strictly_convex():
    Y = np.linspace(-5, 5, 20001)
    assert np.min(SeparableModel().hpp(Y)) >= 0.19


@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_separable_imaginary_time_is_kahler(t):
    m = separable().reference["model"]
    Y = np.linspace(-2, 2, 41)
    assert m.is_diffeomorphism(1j * t, Y)
    assert np.all(m.classify(1j * t, 0 * Y, Y) == KAHLER)


def test_separable_chart_is_shifted_by_flow():
    m = SeparableModel()
    X, Y = np.array([0.2, -0.3]), np.array([0.4, 0.9])
    fx, fy = m.flow(0.5 + 0.5j, X, Y)
    np.testing.assert_allclose(m.chart(0.5 + 0.5j, X, Y), fx + 1j * fy)


def test_separable_chart_agrees_with_series_for_polynomial_h():
    s = separable_system(y**2 / 2 + y**4 / 12)
    es = evolve_chart(s, 4)
    X = GridSpec.box(("x", "y"), -1, 1, 4).mesh()
    ser = es.chart_values(0.3 + 0.7j, X)[0]
    exact = separable_chart(lambda v: v + v**3 / 3, 0.3 + 0.7j)(X[0], X[1])[2]
    np.testing.assert_allclose(ser, exact, atol=1e-13)


def test_separable_rejects_x_dependence():
    with pytest.raises(ValueError):
        separable_system(symbols("x")[0] * y)


def test_separable_negative_time_can_fail():
    m = SeparableModel()
    assert not m.is_diffeomorphism(-2j, np.array([0.0]))
    assert m.classify(-1j, [0.0], [0.0])[0] == REAL


# ---------------------------------------------------------------------------
# cotangent bundles


def test_su2_basis_relations():
    for j in range(3):
        for k in range(3):
            comm = SU2_BASIS[j] @ SU2_BASIS[k] - SU2_BASIS[k] @ SU2_BASIS[j]
            np.testing.assert_allclose(comm, np.einsum("l,lab->ab", STRUCTURE[:, j, k], SU2_BASIS), atol=1e-15)
            assert np.trace(SU2_BASIS[j] @ SU2_BASIS[k]) == pytest.approx(-0.5 * (j == k))
    assert EPS[0, 1, 2] == 1 and EPS[1, 0, 2] == -1


def test_su2_coordinates_roundtrip():
    v = np.array([0.3, -1.2, 0.5])
    np.testing.assert_allclose(su2_coords(su2_element(v)), v)


def test_adjoint_representation_is_orthogonal():
    rng = np.random.default_rng(3)
    ad = REPRESENTATIONS["adjoint"].group
    for _ in range(10):
        g = random_su2(rng)
        R = ad(g)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-13)
        assert np.linalg.det(R).real == pytest.approx(1.0)


def test_adjoint_is_a_homomorphism():
    rng = np.random.default_rng(4)
    ad = REPRESENTATIONS["adjoint"].group
    a, b = random_su2(rng), random_su2(rng)
    np.testing.assert_allclose(ad(a @ b), ad(a) @ ad(b), atol=1e-13)


@pytest.mark.parametrize("rep", ["defining", "adjoint"])
def test_tstark_series_matches_closed_form(rep):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        g = random_su2(rng)
        Y = rng.uniform(-0.8, 0.8, 3)
        tau = complex(*rng.uniform(-0.5, 0.5, 2))
        n = 2 if rep == "defining" else 3
        E = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        a = tstark_lie_series(g, Y, tau, rep, E)
        b = tstark_closed_form(g, Y, tau, rep, E)
        worst = max(worst, abs(a - b))
    assert worst <= 1e-10


def test_tstark_series_order_limit():
    with pytest.raises(ValueError):
        tstark_lie_series(np.eye(2), np.zeros(3), 0.1, N=17)


def test_tstark_left_translation_equivariance():
    rng = np.random.default_rng(5)
    a, g = random_su2(rng), random_su2(rng)
    Y, tau = np.array([0.2, 0.1, -0.4]), 0.3 + 0.2j
    # tr(E a g e^{...}) = tr((E a) g e^{...})
    E = np.diag([1.0, 2.0])
    assert tstark_closed_form(a @ g, Y, tau, E=E) == pytest.approx(tstark_closed_form(g, Y, tau, E=E @ a))


def test_tstark_potential():
    Y = np.array([0.3, -0.2, 0.5])
    assert tstark_potential(Y, 0.0) == pytest.approx(float(Y @ Y))
    assert tstark_potential(Y, 1 + 1j) == pytest.approx(2 * float(Y @ Y))
    assert tstark_potential_check(Y, 0.4 + 0.7j) <= 1e-14


def test_tstark_symplectic_matrix_is_nondegenerate():
    W = tstark_symplectic_matrix([0.3, 0.1, -0.2])
    np.testing.assert_allclose(W, -W.T)
    assert abs(np.linalg.det(W)) == pytest.approx(1.0)


@pytest.mark.parametrize("s,tag", [(0.0, KAHLER), (0.5, KAHLER), (-0.5, KAHLER), (-1.0, REAL), (-1.5, PSEUDO_KAHLER)])
def test_tstark_classification(s, tag):
    rng = np.random.default_rng(2)
    g = random_su2(rng)
    assert tstark_classify(g, np.array([0.4, -0.3, 0.2]), 0.2 + 1j * s) == tag


def test_torus_series_and_system():
    assert torus_lie_series(0.4, 0.7, 0.3 + 0.2j) == pytest.approx(torus_closed_form(0.4, 0.7, 0.3 + 0.2j), abs=1e-12)
    s = tstark_torus_system()
    assert s.validate()["ok"]
    es = evolve_chart(s, 3)
    z = es.chart_values(0.3 + 0.2j, np.array([[0.4], [0.7]]))[0, 0]
    assert np.exp(1j * z) == pytest.approx(torus_closed_form(0.4, 0.7, 0.3 + 0.2j))


def test_torus_potential_matches_closed_form():
    s = tstark_torus_system()
    for tau in (0.5j, 0.3 + 0.2j):
        k = kahler_potential(s, 4, tau, (0.4, 0.7), warn=False)
        assert k == pytest.approx(tstark_potential(np.array([0.7]), tau))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_tstark_series_property(seed, a, b):
    rng = np.random.default_rng(seed)
    g = random_su2(rng)
    Y = rng.uniform(-0.8, 0.8, 3)
    assert abs(tstark_lie_series(g, Y, complex(a, b)) - tstark_closed_form(g, Y, complex(a, b))) <= 1e-9
