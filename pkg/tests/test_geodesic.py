from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import linear_phi
from kahlerflow.geodesic import (
    GeodesicProbe,
    convergence_order,
    geodesic_residual,
    kahler_identity_residual,
    mabuchi_path_value,
    mabuchi_quadrature,
    moser_inverse,
    observed_order,
    pushed_form_type_defect,
    velocity_check,
)
from kahlerflow.kahler import ChartInversionError, evolve_chart
from kahlerflow.models import coupled_system, linear_system, quartic_system
from kahlerflow.symcore import GridSpec

GRID = GridSpec.box(("x", "y"), -0.5, 0.5, 5)


def probe(system, **kw):
    kw.setdefault("grid", GRID)
    return GeodesicProbe(system, **kw)


def test_probe_validates_inputs():
    with pytest.raises(ValueError):
        GeodesicProbe(linear_system(), ts=(0.2, 0.1))
    with pytest.raises(ValueError):
        GeodesicProbe(linear_system(), dt=0)


def test_moser_inverse_linear():
    es = evolve_chart(linear_system(), 2)
    Q = GRID.mesh()
    P = moser_inverse(es, 0.5j, Q)
    # x + 1.5 i y = x' + i y'
    np.testing.assert_allclose(P, np.array([Q[0], Q[1] / 1.5]), atol=1e-14)


def test_moser_inverse_quartic_roundtrip():
    es = evolve_chart(quartic_system(), 20)
    Q = GRID.mesh()
    P = moser_inverse(es, 0.2j, Q)
    np.testing.assert_allclose(es.chart_values(0.2j, P), evolve_chart(quartic_system(), 0).chart_values(0, Q), atol=1e-13)


def test_moser_inverse_fails_at_real_structure():
    es = evolve_chart(linear_system(), 2)
    with pytest.raises(ChartInversionError):
        moser_inverse(es, -1j, GRID.mesh())


@pytest.mark.parametrize("t", [0.05, 0.1, 0.2, 0.5])
def test_linear_path_closed_form(t):
    Q = GRID.mesh()
    got = mabuchi_path_value(probe(linear_system(), N=2), t, Q)
    np.testing.assert_allclose(got, linear_phi(Q[1], t), atol=1e-13)


@pytest.mark.parametrize("t", [0.05, 0.1, 0.2])
def test_linear_velocity_and_geodesic(t):
    pr = probe(linear_system(), N=2)
    Q = GRID.mesh()
    assert velocity_check(pr, t, Q) <= 1e-6
    assert geodesic_residual(pr, t, Q).residual <= 1e-5


@pytest.mark.parametrize("t", [0.05, 0.1, 0.15, 0.2])
def test_quartic_velocity_and_geodesic(t):
    pr = probe(quartic_system(), N=20)
    Q = GRID.mesh()
    assert velocity_check(pr, t, Q) <= 1e-6
    assert geodesic_residual(pr, t, Q).residual <= 1e-5


def test_quartic_second_order_convergence():
    pr = probe(quartic_system(), N=20)
    orders = convergence_order(pr, 0.1, GRID.mesh(), (4e-2, 2e-2, 1e-2, 5e-3))
    fin = orders[np.isfinite(orders)]
    assert fin.size > 0 and np.all(np.abs(fin - 2) <= 0.3)
    assert abs(observed_order(pr, 0.1, GRID.mesh()) - 2) <= 0.3


def test_origin_is_masked_in_order_estimate():
    pr = probe(quartic_system(), N=20)
    orders = convergence_order(pr, 0.1, np.zeros((2, 1)), (1e-2, 5e-3))
    assert np.isnan(orders).all()


def test_geodesic_terms_linear():
    # phi_t = -t y^2/(1+t): phi_tt = 2 y^2/(1+t)^3
    pr = probe(linear_system(), N=2)
    Q = GRID.mesh()
    res = geodesic_residual(pr, 0.1, Q, refine=False)
    np.testing.assert_allclose(res.phi_tt, 2 * Q[1] ** 2 / 1.1**3, atol=1e-5)


@pytest.mark.parametrize("tau", [0.3j, 0.1 + 0.2j])
def test_kahler_identity(tau):
    assert kahler_identity_residual(evolve_chart(quartic_system(), 20), tau, GRID.mesh()) <= 1e-10
    c = coupled_system()
    Q = GridSpec.box(c.coords, -0.3, 0.3, 2).mesh()
    assert kahler_identity_residual(evolve_chart(c, 12), 0.1 * tau, Q) <= 1e-8


def test_pushed_form_is_type_one_one():
    es = evolve_chart(quartic_system(), 20)
    assert pushed_form_type_defect(es, 0.3j, GRID.mesh()) <= 1e-10


def test_quadrature_is_informational():
    out = mabuchi_quadrature(probe(linear_system(), N=2), 0.1)
    assert out["informational"] and out["value"] > 0


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.02, 0.3))
def test_linear_potential_path_property(a, b, t):
    v = mabuchi_path_value(probe(linear_system(), N=2), t, (a, b))
    assert v == pytest.approx(linear_phi(b, t), abs=1e-13)
