"""Hamiltonian flows on the complexified phase space and leaf projections.

Points of the complexification are represented internally by complexified
real coordinates ``xi`` in ``C^{2n}``; the real phase space is the locus
``xi`` real and the antiholomorphic involution is ``xi -> conj(xi)``.
Normalized expressions contain no conjugation nodes, so every model function
continues holomorphically by evaluation at complex ``xi``.  For an affine
chart ``z = M x + c`` the doubled holomorphic coordinates are

    z_C = M xi + c,    w_C = conj(M) xi + conj(c)

and ``w_C = conj(z_C)`` exactly on the real locus.

The flow ``eta_t`` is the real-time flow of the real part of the holomorphic
field ``-tau X_h`` continued to ``xi``; in ``xi`` coordinates this is the ODE
``xi' = -tau X_h(xi)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp

from .kahler import EvolvedStructure, HamSystem, as_coord_array, chart_map, evolve_chart
from .lieseries import DEFAULT_ORDER
from .symcore import GridSpec, compile_expr, normalize
from .symcore.expr import _coerce


class ProjectionUndefined(ArithmeticError):
    """The evolved leaf through a point does not meet the real phase space
    transversally (real or mixed regime)."""


class IntegrationError(ArithmeticError):
    def __init__(self, message: str, reached: float):
        super().__init__(f"{message} (reached t = {reached:.6g})")
        self.reached = reached


# ---------------------------------------------------------------------------
# doubled charts


@dataclass(frozen=True)
class DoubledChart:
    """Holomorphic coordinates ``(z_C, w_C)`` on the complexification."""

    system: HamSystem

    def __post_init__(self):
        if not self.system.is_affine_chart():
            raise NotImplementedError("doubled charts are implemented for affine charts")

    @cached_property
    def _affine(self):
        s = self.system
        M = np.array([[complex(d.poly.constant_value()) for d in row] for row in s.chart_jacobian_exprs])
        zero = np.zeros(len(s.coords))
        c = np.array([complex(compile_expr(z, s.coords)(*zero)) for z in s.chart])
        B = np.concatenate([M, M.conj()])
        return M, c, B

    def to_doubled(self, xi) -> np.ndarray:
        M, c, _ = self._affine
        xi = np.asarray(xi, dtype=complex)
        return np.concatenate([M @ xi + c, M.conj() @ xi + c.conj()])

    def from_doubled(self, zw) -> np.ndarray:
        M, c, B = self._affine
        zw = np.asarray(zw, dtype=complex)
        return np.linalg.solve(B, zw - np.concatenate([c, c.conj()]))

    def embed(self, p) -> np.ndarray:
        """``iota``: real point to doubled coordinates."""
        return self.to_doubled(np.asarray(p, dtype=float))

    def sigma(self, zw) -> np.ndarray:
        """Antiholomorphic involution ``(z_C, w_C) -> (conj w_C, conj z_C)``."""
        n = self.system.n
        zw = np.asarray(zw, dtype=complex)
        return np.concatenate([zw[n:].conj(), zw[:n].conj()])

    def pi0(self, zw) -> np.ndarray:
        """Real point on the leaf ``z_C = const`` through ``(z_C, w_C)``."""
        n = self.system.n
        zw = np.asarray(zw, dtype=complex)
        z = zw[:n]
        xi = self.from_doubled(np.concatenate([z, z.conj()]))
        return xi.real


def complexify(e, chart: DoubledChart):
    """Holomorphic continuation of ``e`` as a callable on ``(z_C, w_C)``.

    Normalization removes all conjugations (coordinates are real), so the
    continuation is evaluation at the complexified coordinates.
    """
    e = normalize(_coerce(e))
    coords = chart.system.coords
    f = compile_expr(e, coords)

    def continued(zw):
        xi = chart.from_doubled(zw)
        return complex(np.asarray(f(*xi), dtype=complex))

    return continued


# ---------------------------------------------------------------------------
# flows


@dataclass(frozen=True)
class ComplexFlowField:
    """``xi' = -tau X_h(xi)`` on complexified coordinates."""

    system: HamSystem
    tau: complex

    @cached_property
    def _fns(self):
        return [compile_expr(a, self.system.coords) for a in self.system.field.components]

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=complex)
        vals = [np.broadcast_to(np.asarray(f(*xi), dtype=complex), xi.shape[1:]) for f in self._fns]
        return -complex(self.tau) * np.array(vals)

    def tangency_defect(self, p) -> float:
        """Imaginary part of the field at a real point (zero for real ``tau``)."""
        return float(np.max(np.abs(self(np.asarray(p, dtype=float)).imag)))


def flow_xi(field: ComplexFlowField, xi0, t: float, tol: float = 1e-10) -> np.ndarray:
    """Integrate the holomorphic flow from ``xi0`` for real time ``t``
    (embedded Runge-Kutta 4(5) with ``rtol = atol = tol``)."""
    xi0 = np.asarray(xi0, dtype=complex)
    if t == 0:
        return xi0.copy()
    m = xi0.size

    def rhs(_, u):
        v = field(u[:m] + 1j * u[m:])
        return np.concatenate([v.real, v.imag])

    sol = solve_ivp(rhs, (0.0, float(t)), np.concatenate([xi0.real, xi0.imag]), method="RK45", rtol=tol, atol=tol)
    if sol.status != 0:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"integration failed: {sol.message}", reached)
    u = sol.y[:, -1]
    return u[:m] + 1j * u[m:]


def flow_eta(field: ComplexFlowField, p0, t: float, tol: float = 1e-10, chart: DoubledChart | None = None) -> np.ndarray:
    """``eta_t`` on doubled coordinates ``(z_C, w_C)``."""
    chart = chart or DoubledChart(field.system)
    xi = flow_xi(field, chart.from_doubled(p0), t, tol)
    return chart.to_doubled(xi)


# ---------------------------------------------------------------------------
# projections and the diagram


def _leaf_solve(es: EvolvedStructure, tau, c, seed, tol: float = 1e-13, maxiter: int = 50, cond_max: float = 1e10):
    """Real ``m`` with ``z_tau(m) = c`` by Newton from ``seed``."""
    m = np.asarray(seed, dtype=float).reshape(-1, 1).copy()
    c = np.asarray(c, dtype=complex).reshape(-1, 1)
    scale = max(1.0, float(np.max(np.abs(c))))
    for _ in range(maxiter):
        F = es.chart_values(tau, m) - c
        r = float(np.max(np.abs(F)))
        A = es.jacobian(tau, m)[0]
        J = np.concatenate([A.real, A.imag])
        if np.linalg.cond(J) > cond_max:
            raise ProjectionUndefined("leaf does not meet M (real/mixed regime): singular leaf equations")
        if r <= tol * scale:
            return m[:, 0]
        m = m - np.linalg.solve(J, np.concatenate([F.real, F.imag]))
    raise ProjectionUndefined(f"leaf does not meet M (real/mixed regime): Newton stalled at residual {r:.3e}")


def blu_forward(system: HamSystem, tau, t: float, p, N: int = DEFAULT_ORDER, tol: float = 1e-10) -> np.ndarray:
    """``pi_t(eta_t(iota p))``.

    The leaf of the evolved foliation through ``xi_t = eta_t(p)`` is the level
    set of ``e^{t tau X_h} z`` through ``xi_t``; its intersection with the real
    phase space is found by Newton's method seeded at ``p``, with continuation
    in ``t`` when the direct solve fails to converge.
    """
    p = np.asarray(p, dtype=float)
    if t == 0:
        return p.copy()
    field = ComplexFlowField(system, complex(tau))
    es = evolve_chart(system, N)
    ttau = complex(tau) * t
    xi_t = flow_xi(field, p.astype(complex), t, tol)
    c = es.chart_values(ttau, xi_t.reshape(-1, 1))[:, 0]
    try:
        return _leaf_solve(es, ttau, c, p)
    except ProjectionUndefined as exc:
        if "singular" in str(exc):
            raise
    seed = p
    for k in range(1, 9):
        s = t * k / 8
        xi_s = flow_xi(field, p.astype(complex), s, tol)
        cs = es.chart_values(complex(tau) * s, xi_s.reshape(-1, 1))[:, 0]
        seed = _leaf_solve(es, complex(tau) * s, cs, seed)
    return seed


def varphi_via_pi0(system: HamSystem, tau, t: float, p, tol: float = 1e-10) -> np.ndarray:
    """``pi_0(eta_{-t}(iota p))``; defined even where the chart map degenerates."""
    p = np.asarray(p, dtype=float)
    chart = DoubledChart(system)
    field = ComplexFlowField(system, complex(tau))
    xi = flow_xi(field, p.astype(complex), -t, tol)
    return chart.pi0(chart.to_doubled(xi))


def diagram_check(system: HamSystem, tau, t: float, grid, N: int = DEFAULT_ORDER, tol: float = 1e-10) -> float:
    """max ``|phi_{t tau}(blu_forward(p)) - p|`` over the grid."""
    pts = grid.points() if isinstance(grid, GridSpec) else grid
    X, _ = as_coord_array(system.coords, pts)
    es = evolve_chart(system, N)
    worst = 0.0
    for k in range(X.shape[1]):
        p = X[:, k]
        q = blu_forward(system, tau, t, p, N, tol)
        back = chart_map(es, complex(tau) * t, q.reshape(-1, 1))[:, 0]
        worst = max(worst, float(np.max(np.abs(back - p))))
    return worst


def regime_tag(system: HamSystem, tau, t: float, p, N: int = DEFAULT_ORDER) -> str:
    from .kahler import classify

    return classify(evolve_chart(system, N), complex(tau) * t, dict(zip(system.coords, np.asarray(p, dtype=float))))
