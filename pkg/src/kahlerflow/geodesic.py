"""Imaginary-time potentials as geodesics in the space of Kaehler potentials.

For ``tau = i t`` the chart map ``Phi_t = phi_tau`` (``z o phi_tau = z_tau``)
carries ``(J_tau, omega)`` to ``(J_0, omega_t)``, and

    phi_t = kappa_{it} o Phi_t^{-1} - kappa_0

is a path of potentials relative to the initial chart.  The checks below
are pointwise finite-difference residuals of

    d/dt phi_t = -2 h o Phi_t^{-1}
    d^2/dt^2 phi_t = 1/2 |grad dphi/dt|^2

where the gradient is taken with respect to the metric of
``omega_t = omega + i d_0 dbar_0 phi_t`` and ``J_0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .kahler import (
    ChartInversionError,
    EvolvedStructure,
    HamSystem,
    KAHLER,
    _fd_grad_hess,
    as_coord_array,
    classify_jacobian,
    evolve_chart,
    potential_flow,
)
from .lieseries import DEFAULT_ORDER
from .symcore import GridSpec, compile_expr


class LeftKahlerRegion(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Moser inverse


def moser_inverse(es: EvolvedStructure, tau, q, maxiter: int = 50, tol: float = 1e-10) -> np.ndarray:
    """Solve ``z_tau(p) = z(q)`` for real ``p`` by Newton's method.

    ``q`` is a mapping or a stacked array ``(2n, M)``; the result has the
    stacked shape.  Iterates until the update stalls at rounding level, since
    the finite differences downstream amplify any leftover error.
    """
    Q, _ = as_coord_array(es.coords, q)
    Q = Q.astype(float)
    target = evolve_chart(es.system, 0).chart_values(0.0, Q)
    scale = max(1.0, float(np.max(np.abs(target))))
    p = Q.copy()
    res = np.inf
    for _ in range(maxiter):
        F = es.chart_values(tau, p) - target
        res = float(np.max(np.abs(F)))
        A = es.jacobian(tau, p)
        J = np.concatenate([A.real, A.imag], axis=1)
        rhs = np.concatenate([F.real, F.imag]).T[..., None]
        try:
            dp = np.linalg.solve(J, rhs)[..., 0].T
        except np.linalg.LinAlgError:
            raise ChartInversionError("singular Jacobian in Moser inversion", res) from None
        p = p - dp
        if float(np.max(np.abs(dp))) <= 4 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(p)))):
            F = es.chart_values(tau, p) - target
            res = float(np.max(np.abs(F)))
            break
    if not np.isfinite(res) or res > tol * scale:
        raise ChartInversionError("Moser inversion did not converge in %d iterations" % maxiter, res)
    return p


# ---------------------------------------------------------------------------
# probes


@dataclass(frozen=True)
class GeodesicProbe:
    system: HamSystem
    ts: Tuple[float, ...] = (0.05, 0.1, 0.15, 0.2)
    grid: GridSpec | None = None
    dt: float = 1e-3
    dx: float = 1e-3
    N: int = DEFAULT_ORDER

    def __post_init__(self):
        ts = tuple(float(t) for t in self.ts)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("t-samples must be strictly increasing")
        if self.dt <= 0 or self.dx <= 0:
            raise ValueError("finite-difference steps must be positive")
        object.__setattr__(self, "ts", ts)

    @property
    def es(self) -> EvolvedStructure:
        return evolve_chart(self.system, self.N)

    @property
    def es0(self) -> EvolvedStructure:
        return evolve_chart(self.system, 0)

    def points(self) -> np.ndarray:
        grid = self.grid or self.system.domain
        X, _ = as_coord_array(self.system.coords, grid.points())
        return X


def mabuchi_path_value(probe: GeodesicProbe, t: float, q) -> np.ndarray:
    """``phi_t(q) = kappa_{it}(Phi_t^{-1} q) - kappa_0(q)`` at stacked points."""
    Q, shape = as_coord_array(probe.system.coords, q)
    pf = potential_flow(probe.system, probe.N)
    p = moser_inverse(probe.es, 1j * t, Q)
    val = pf.kappa(1j * t, p) - pf.kappa(0.0, Q)
    return float(val[0]) if shape == () else val.reshape(shape)


def _phi(probe: GeodesicProbe, t: float, Q: np.ndarray) -> np.ndarray:
    pf = potential_flow(probe.system, probe.N)
    return pf.kappa(1j * t, moser_inverse(probe.es, 1j * t, Q)) - pf.kappa(0.0, Q)


def velocity_check(probe: GeodesicProbe, t: float, q, dt: float | None = None) -> float:
    """max |central difference of phi_t + 2 h(Phi_t^{-1} q)|."""
    dt = probe.dt if dt is None else dt
    Q, _ = as_coord_array(probe.system.coords, q)
    dphi = (_phi(probe, t + dt, Q) - _phi(probe, t - dt, Q)) / (2 * dt)
    h = compile_expr(probe.system.h, probe.system.coords)
    p = moser_inverse(probe.es, 1j * t, Q)
    hp = np.broadcast_to(np.asarray(h(*p), dtype=complex).real, dphi.shape)
    return float(np.max(np.abs(dphi + 2 * hp)))


def _initial_frame(system: HamSystem, Q: np.ndarray):
    es0 = evolve_chart(system, 0)
    A = es0.jacobian(0.0, Q)
    A2 = es0.hessians(0.0, Q)
    B = np.concatenate([A, A.conj()], axis=1)
    B2 = np.concatenate([A2, A2.conj()], axis=1)
    return B, B2


def _complex_hessian(g, H, B, B2):
    """``d_w d_w kappa`` from a real gradient and Hessian and chart data."""
    BinvT = np.linalg.inv(np.swapaxes(B, 1, 2))
    kw = np.einsum("pij,pj->pi", BinvT, g.astype(complex))
    corr = np.einsum("pm,pmab->pab", kw, B2)
    return BinvT @ (H - corr) @ np.swapaxes(BinvT, 1, 2)


def path_metric(system: HamSystem, Q: np.ndarray, gphi: np.ndarray, Hphi: np.ndarray) -> np.ndarray:
    """``gamma~ = W_t J_0`` for ``omega_t = omega + i d_0 dbar_0 phi_t``.

    ``gphi`` and ``Hphi`` are the real gradient and Hessian of ``phi_t``.
    """
    n = system.n
    B, B2 = _initial_frame(system, Q)
    K = _complex_hessian(gphi, Hphi, B, B2)[:, :n, n:]
    Z = np.zeros_like(K)
    Qw = np.block([[Z, 1j * K], [-1j * np.swapaxes(K, 1, 2), Z]])
    Wt = system.W[None] + (np.swapaxes(B, 1, 2) @ Qw @ B).real
    D = np.concatenate([np.full(n, 1j), np.full(n, -1j)])
    J0 = np.linalg.solve(B, D[None, :, None] * B).real
    return Wt @ J0


@dataclass
class GeodesicResult:
    residual: float
    per_point: np.ndarray
    phi_tt: np.ndarray
    half_grad_norm: np.ndarray
    refined_residual: float | None = None
    order: float | None = None


def _geodesic_terms(probe: GeodesicProbe, t: float, Q: np.ndarray, dt: float, dx: float):
    m = Q.shape[0]
    phi = lambda s, Y: _phi(probe, s, Y)
    f_p, f_0, f_m = phi(t + dt, Q), phi(t, Q), phi(t - dt, Q)
    phi_tt = (f_p - 2 * f_0 + f_m) / dt**2
    grad_dot = np.empty((Q.shape[1], m))
    for a in range(m):
        e = np.zeros((m, 1))
        e[a] = dx
        grad_dot[:, a] = (phi(t + dt, Q + e) - phi(t + dt, Q - e) - phi(t - dt, Q + e) + phi(t - dt, Q - e)) / (4 * dt * dx)
    gphi, Hphi = _fd_grad_hess(lambda Y: phi(t, Y), Q, dx)
    gam = path_metric(probe.system, Q, gphi, Hphi)
    sym = 0.5 * (gam + np.swapaxes(gam, 1, 2))
    ev = np.linalg.eigvalsh(sym)
    if np.any(ev <= 0):
        raise LeftKahlerRegion("left Kaehler region: path metric is not positive definite")
    v = np.linalg.solve(sym, grad_dot[..., None])[..., 0]
    half = 0.5 * np.einsum("pa,pa->p", grad_dot, v)
    return phi_tt, half


def geodesic_residual(probe: GeodesicProbe, t: float, q, dt: float | None = None, dx: float | None = None,
                      refine: bool = True) -> GeodesicResult:
    """|phi_tt - 1/2 |grad phi_t'|^2| with optional step-halving refinement."""
    dt = probe.dt if dt is None else dt
    dx = probe.dx if dx is None else dx
    Q, _ = as_coord_array(probe.system.coords, q)
    tt, half = _geodesic_terms(probe, t, Q, dt, dx)
    per = np.abs(tt - half)
    out = GeodesicResult(float(np.max(per)), per, tt, half)
    if refine:
        tt2, half2 = _geodesic_terms(probe, t, Q, dt / 2, dx / 2)
        r2 = float(np.max(np.abs(tt2 - half2)))
        out.refined_residual = r2
        out.order = math.log2(out.residual / r2) if r2 > 0 and out.residual > 0 else float("nan")
    return out


def convergence_order(probe: GeodesicProbe, t: float, q, steps: Sequence[float], floor: float = 1e-11) -> np.ndarray:
    """Observed orders ``log2(r(h)/r(h/2))`` between consecutive steps.

    Shape ``(len(steps) - 1, M)``; entries are NaN where either residual is
    below ``floor`` (symmetric points where the residual vanishes, or the
    rounding floor of the stencils).
    """
    Q, _ = as_coord_array(probe.system.coords, q)
    res = []
    for h in steps:
        tt, half = _geodesic_terms(probe, t, Q, h, h)
        res.append(np.abs(tt - half))
    res = np.array(res)
    ok = (res[:-1] > floor) & (res[1:] > floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, np.log2(res[:-1] / res[1:]), np.nan)


def observed_order(probe: GeodesicProbe, t: float, q, step: float = 1e-2, floor: float = 1e-11) -> float:
    """Smallest order over points measured from one halving of ``step``."""
    orders = convergence_order(probe, t, q, (step, step / 2), floor)
    return float(np.nanmin(orders)) if np.any(np.isfinite(orders)) else float("nan")


# ---------------------------------------------------------------------------
# identities used along the path


def kahler_identity_residual(es: EvolvedStructure, tau, q) -> float:
    """Relative mismatch of ``|X_h|^2`` and ``|dh|^2`` in ``gamma_tau``."""
    system = es.system
    X, _ = as_coord_array(system.coords, q)
    an = classify_jacobian(es.jacobian(tau, X), system.W)
    X = X[:, an.tags == KAHLER]
    if X.shape[1] == 0:
        return float("nan")
    Gam = es.riemannian(tau, X)
    Xh = np.real(system.field.evaluate(dict(zip(system.coords, X)))).T
    grad = np.array([np.broadcast_to(np.asarray(compile_expr(d, system.coords)(*X), dtype=complex).real, X.shape[1:])
                     for d in _grad_h(system)]).T
    a = np.einsum("pa,pab,pb->p", Xh, Gam, Xh)
    b = np.einsum("pa,pa->p", grad, np.linalg.solve(Gam, grad[..., None])[..., 0])
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))


def _grad_h(system: HamSystem):
    from .symcore import differentiate

    return [differentiate(system.h, x) for x in system.coords]


def pushed_form_type_defect(es: EvolvedStructure, tau, p) -> float:
    """(2,0) part of ``omega_tau = (phi_tau^{-1})^* omega`` in the initial chart.

    Evaluated at ``q = phi_tau(p)`` with ``D phi_tau = B_0(q)^{-1} B_tau(p)``.
    """
    from .kahler import chart_map

    system = es.system
    P, _ = as_coord_array(system.coords, p)
    Qp = chart_map(es, tau, P)
    A = es.jacobian(tau, P)
    Bt = np.concatenate([A, A.conj()], axis=1)
    B0, _ = _initial_frame(system, Qp)
    D = np.linalg.solve(B0, Bt).real
    Dinv = np.linalg.inv(D)
    Wq = np.swapaxes(Dinv, 1, 2) @ system.W[None] @ Dinv
    B0inv = np.linalg.inv(B0)
    Wpp = np.swapaxes(B0inv, 1, 2) @ Wq @ B0inv
    n = system.n
    return float(np.max(np.abs(Wpp[:, :n, :n])))


def mabuchi_quadrature(probe: GeodesicProbe, t: float) -> Dict[str, object]:
    """Trapezoid integral of ``(d phi_t/dt)^2`` over the probe box.

    Informational only: the box is not a compact manifold and the value is
    not a norm in the space of potentials.
    """
    grid = probe.grid or probe.system.domain
    Q, _ = as_coord_array(probe.system.coords, grid.points())
    dt = probe.dt
    dphi = (_phi(probe, t + dt, Q) - _phi(probe, t - dt, Q)) / (2 * dt)
    vals = (dphi**2).reshape(grid.shape)
    for ax in reversed(grid.axes()):
        vals = np.trapezoid(vals, ax, axis=-1)
    return {"value": float(vals), "informational": True,
            "caveat": "box quadrature on a noncompact chart; not a metric on potentials"}
