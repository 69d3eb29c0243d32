"""Built-in phase spaces with closed-form reference data.

* ``linear``: plane, ``h = y^2/2``, chart ``x + tau0 y``.
* ``quartic``: plane, ``h = (xy)^2/2``, chart ``x + i y``.
* ``separable``: plane, ``h = h(y)`` (numeric, possibly non-analytic, or symbolic).
* ``tstark-torus``: cotangent bundle of the circle, chart ``q + i u(y)``.
* ``tstark-su2``: cotangent bundle of SU(2), functions ``tr(E pi(x e^{(i+tau) u(Y)}))``.
* ``coupled``: a two degree of freedom polynomial system for bracket tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy.linalg import expm, expm_frechet

from .kahler import HamSystem, classify_jacobian
from .lieseries import SymplecticForm
from .symcore import GridSpec, I, const, differentiate, normalize, symbols

x, y = symbols("x y")
_PLANE = SymplecticForm.darboux([("x", "y")])
# theta with omega = -d theta; compatible with every flat chart used below
_THETA_PLANE = (y / 2, -x / 2)


@dataclass(frozen=True)
class ModelDescriptor:
    name: str
    params: Dict[str, object]
    system: Optional[HamSystem]
    reference: Dict[str, Callable] = field(default_factory=dict, compare=False, hash=False)


# ---------------------------------------------------------------------------
# plane models


def linear_system(tau0: complex = 1j, box: float = 1.0) -> HamSystem:
    """``h = y^2/2`` with the flat chart ``z = x + tau0 y`` (``Im tau0 > 0``)."""
    tau0 = complex(tau0)
    if tau0.imag <= 0:
        raise ValueError("the initial chart needs Im(tau0) > 0")
    r0, s0 = tau0.real, tau0.imag
    kappa0 = ((x + r0 * y) ** 2 + s0 * s0 * y**2) / (2 * s0)
    return HamSystem(
        _PLANE, y**2 / 2, _THETA_PLANE, (x + const(tau0) * y,), kappa0,
        GridSpec.box(("x", "y"), -box, box, 11), name="linear",
    )


def linear(tau0: complex = 1j) -> ModelDescriptor:
    tau0 = complex(tau0)
    r0, s0 = tau0.real, tau0.imag

    def chart(p, tau):
        return p[0] + (tau0 + tau) * p[1]

    def metric(tau):
        r, s = r0 + complex(tau).real, s0 + complex(tau).imag
        return np.array([[1.0, r], [r, s * s + r * r]]) / s

    def kappa(p, tau):
        r, s = complex(tau).real, complex(tau).imag
        X, Y = p
        return ((X + r0 * Y) ** 2 + s0 * s0 * Y * Y) / (2 * s0) + r * Y * (X + r0 * Y) / s0 + (r * r - s * s) * Y * Y / (2 * s0)

    def g(tau):
        return 1.0 / (2 * (s0 + complex(tau).imag))

    return ModelDescriptor("linear", {"tau0": tau0}, linear_system(tau0),
                           {"chart": chart, "riemannian": metric, "kappa": kappa, "g": g})


def quartic_system(box: float = 0.5) -> HamSystem:
    return HamSystem(
        _PLANE, (x * y) ** 2 / 2, _THETA_PLANE, (x + I * y,), (x**2 + y**2) / 2,
        GridSpec.box(("x", "y"), -box, box, 11), name="quartic",
    )


def quartic() -> ModelDescriptor:
    def chart(p, tau):
        X, Y = p
        return X * np.exp(tau * X * Y) + 1j * Y * np.exp(-tau * X * Y)

    def kappa_it(p, t):
        X, Y = p
        return 0.5 * np.cos(2 * t * X * Y) * (X * X + Y * Y) + t * X * X * Y * Y

    def inv_g_it(p, t):
        X, Y = p
        return 2 * t * (X * X + Y * Y - 2 * X * Y * np.sin(2 * t * X * Y)) + 2 * np.cos(2 * t * X * Y)

    return ModelDescriptor("quartic", {}, quartic_system(),
                           {"chart": chart, "kappa_it": kappa_it, "inv_g_it": inv_g_it})


def separable_system(h_expr, box: float = 1.0) -> HamSystem:
    """Symbolic ``h = h(y)`` on the plane with the standard chart."""
    h_expr = normalize(h_expr)
    if "x" in h_expr.free_symbols:
        raise ValueError("separable Hamiltonians depend on y only")
    return HamSystem(
        _PLANE, h_expr, _THETA_PLANE, (x + I * y,), (x**2 + y**2) / 2,
        GridSpec.box(("x", "y"), -box, box, 11), name="separable",
    )


def _bump_h(yv):
    yv = np.asarray(yv, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        e = np.where(yv == 0, 0.0, np.exp(-1.0 / np.where(yv == 0, 1.0, yv) ** 2))
        return 0.5 * yv**2 + e


def _bump_hp(yv):
    yv = np.asarray(yv, dtype=float)
    safe = np.where(yv == 0, 1.0, yv)
    e = np.where(yv == 0, 0.0, np.exp(-1.0 / safe**2))
    return yv + np.where(yv == 0, 0.0, 2.0 / safe**3 * e)


def _bump_hpp(yv):
    yv = np.asarray(yv, dtype=float)
    safe = np.where(yv == 0, 1.0, yv)
    e = np.where(yv == 0, 0.0, np.exp(-1.0 / safe**2))
    return 1.0 + np.where(yv == 0, 0.0, (4.0 / safe**6 - 6.0 / safe**4) * e)


@dataclass(frozen=True)
class SeparableModel:
    """``h = h(y)`` given numerically by ``(h, h', h'')``.

    The default is the smooth, non-analytic convex function
    ``y^2/2 + exp(-1/y^2)``.
    """

    h: Callable = _bump_h
    hp: Callable = _bump_hp
    hpp: Callable = _bump_hpp

    def chart(self, tau, X, Y):
        return separable_chart(self.hp, tau)(X, Y)[2]

    def flow(self, tau, X, Y):
        return separable_chart(self.hp, tau)(X, Y)[:2]

    def jacobian_det(self, tau, Y):
        return 1.0 + complex(tau).imag * self.hpp(Y)

    def is_diffeomorphism(self, tau, Y) -> bool:
        return bool(np.all(self.jacobian_det(tau, Y) > 0))

    def classify(self, tau, X, Y):
        """Classification from the exact two-term chart."""
        Y = np.asarray(Y, dtype=float).ravel()
        A = np.zeros((Y.size, 1, 2), dtype=complex)
        A[:, 0, 0] = 1.0
        A[:, 0, 1] = complex(tau) * self.hpp(Y) + 1j
        return classify_jacobian(A, _PLANE.numeric()).tags


def separable_chart(hp: Callable, tau):
    """``(x, y) -> (x + r h'(y), y + s h'(y), z_tau)`` with ``tau = r + i s``."""
    tau = complex(tau)

    def chart(X, Y):
        d = hp(Y)
        return X + tau.real * d, Y + tau.imag * d, X + tau * d + 1j * Y

    return chart


def separable(model: SeparableModel | None = None) -> ModelDescriptor:
    model = model or SeparableModel()
    return ModelDescriptor("separable", {"h": "y^2/2 + exp(-1/y^2)"}, None, {"model": model})


def coupled_system(box: float = 0.4) -> HamSystem:
    """Two coupled degrees of freedom with a quartic interaction."""
    x1, y1, x2, y2 = symbols("x1 y1 x2 y2")
    omega = SymplecticForm.darboux([("x1", "y1"), ("x2", "y2")])
    h = (x1**2 + y1**2) / 2 + x1 * y1 * x2 * y2 + y2**2 / 2
    theta = (y1 / 2, -x1 / 2, y2 / 2, -x2 / 2)
    return HamSystem(
        omega, h, theta, (x1 + I * y1, x2 + I * y2), (x1**2 + y1**2 + x2**2 + y2**2) / 2,
        GridSpec.box(("x1", "y1", "x2", "y2"), -box, box, 3), name="coupled",
    )


# ---------------------------------------------------------------------------
# cotangent bundles of compact groups


def tstark_torus_system(h_expr=None, box: float = 1.0) -> HamSystem:
    """``T*S^1`` with coordinates ``(q, y)``, ``omega = dq ^ dy``,
    ``theta = y dq`` and chart ``z = q + i u(y)`` where ``u = h'``.

    The circle is represented by a fundamental domain of ``q``; nothing
    here depends on periodicity.
    """
    q, yy = symbols("q y")
    h_expr = normalize(yy**2 / 2 if h_expr is None else h_expr)
    u = differentiate(h_expr, "y")
    omega = SymplecticForm.darboux([("q", "y")])
    return HamSystem(
        omega, h_expr, (yy, const(0)), (q + I * u,), 2 * (yy * u - h_expr),
        GridSpec(("q", "y"), ((-math.pi, math.pi), (-box, box)), (11, 11)), name="tstark-torus",
    )


# SU(2): orthonormal basis E_j = (i/2) sigma_j of su(2); [E_j, E_k] = -eps_jkl E_l
_SIGMA = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)
SU2_BASIS = 0.5j * _SIGMA


def _levi_civita():
    eps = np.zeros((3, 3, 3))
    for (a, b, c), s in (((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1), ((0, 2, 1), -1), ((2, 1, 0), -1), ((1, 0, 2), -1)):
        eps[a, b, c] = s
    return eps


EPS = _levi_civita()
# structure constants c^l_{jk} with [E_j, E_k] = c^l_{jk} E_l
STRUCTURE = -np.transpose(EPS, (2, 0, 1))


def su2_element(yv) -> np.ndarray:
    return np.einsum("j,jab->ab", np.asarray(yv, dtype=complex), SU2_BASIS)


def su2_coords(Mat) -> np.ndarray:
    """Coefficients on ``E_j`` of a traceless matrix (``tr(E_j E_k) = -delta/2``)."""
    return -2.0 * np.einsum("jab,ba->j", SU2_BASIS, Mat)


def random_su2(rng) -> np.ndarray:
    v = rng.normal(size=4)
    a, b, c, d = v / np.linalg.norm(v)
    return np.array([[a + 1j * b, c + 1j * d], [-c + 1j * d, a - 1j * b]])


@dataclass(frozen=True)
class Representation:
    """Group and Lie-algebra actions of a finite dimensional representation."""

    name: str
    group: Callable
    algebra: Callable


def _adjoint_group(g):
    ginv = np.linalg.inv(g)
    cols = [su2_coords(g @ E @ ginv) for E in SU2_BASIS]
    return np.array(cols).T


def _adjoint_algebra(Mat):
    cols = [su2_coords(Mat @ E - E @ Mat) for E in SU2_BASIS]
    return np.array(cols).T


REPRESENTATIONS = {
    "defining": Representation("defining", lambda g: np.asarray(g, dtype=complex), lambda m: np.asarray(m, dtype=complex)),
    "adjoint": Representation("adjoint", _adjoint_group, _adjoint_algebra),
}


def quadratic_h(yv):
    yv = np.asarray(yv, dtype=float)
    return 0.5 * float(yv @ yv)


def quadratic_u(yv):
    return np.asarray(yv, dtype=float)


def tstark_closed_form(xg, yv, tau, rep: str = "defining", E=None, u: Callable = quadratic_u) -> complex:
    """``tr(E pi(x e^{(i + tau) u(Y)}))`` with the matrix exponential by
    scaling and squaring with Pade approximants."""
    pi = REPRESENTATIONS[rep]
    U = su2_element(u(yv))
    g = np.asarray(xg, dtype=complex) @ expm((1j + complex(tau)) * U)
    P = pi.group(g)
    E = np.eye(P.shape[0]) if E is None else np.asarray(E)
    return complex(np.trace(E @ P))


def tstark_lie_series(xg, yv, tau, rep: str = "defining", E=None, N: int = 14, u: Callable = quadratic_u) -> complex:
    """``sum_k tau^k/k! tr(E pi(x) pi(u)^k pi(e^{i u}))``: the iterated action of
    ``X_h = u^j X_j`` on the seed function, by matrix products."""
    if N > 16:
        raise ValueError("order is limited to 16")
    pi = REPRESENTATIONS[rep]
    U = su2_element(u(yv))
    Px = pi.group(np.asarray(xg, dtype=complex))
    Pu = pi.algebra(U)
    Pe = pi.group(expm(1j * U))
    E = np.eye(Px.shape[0]) if E is None else np.asarray(E)
    term = E @ Px
    total = 0j
    tau = complex(tau)
    for k in range(N + 1):
        total += tau**k / math.factorial(k) * np.trace(term @ Pe)
        term = term @ Pu
    return complex(total)


def torus_closed_form(theta, yv, tau, u: Callable = lambda v: v) -> complex:
    """``U(1)`` with generator ``i``: ``e^{i theta} e^{(i+tau) i u} = e^{i theta - u + i tau u}``."""
    uu = u(yv)
    return complex(np.exp(1j * theta - uu + 1j * complex(tau) * uu))


def torus_lie_series(theta, yv, tau, N: int = 14, u: Callable = lambda v: v) -> complex:
    uu = u(yv)
    seed = np.exp(1j * theta - uu)
    return complex(sum(complex(tau) ** k / math.factorial(k) * (1j * uu) ** k for k in range(N + 1)) * seed)


def tstark_potential(yv, tau, h: Callable = quadratic_h, u: Callable = quadratic_u) -> float:
    """``2 (Im tau + 1)(Y . u(Y) - h(Y))``."""
    uu = u(yv)
    return 2.0 * (complex(tau).imag + 1.0) * (float(np.dot(yv, uu)) - h(yv))


def tstark_potential_check(yv, tau, h: Callable = quadratic_h, u: Callable = quadratic_u) -> float:
    """Compare the closed potential with ``-2 Im psi_tau`` built from
    ``kappa0 = 2 (Y.u - h)``, ``X_h kappa0 = 0`` and ``alpha_tau = tau u.Y``."""
    tau = complex(tau)
    uy = float(np.dot(yv, u(yv)))
    k0 = 2.0 * (uy - h(yv))
    psi = -0.5j * k0 + tau * h(yv) - tau * uy
    return abs(tstark_potential(yv, tau, h, u) - (-2.0 * psi.imag))


def tstark_symplectic_matrix(yv) -> np.ndarray:
    """``omega`` on the frame ``(X_1, X_2, X_3, d/dy^1, d/dy^2, d/dy^3)``."""
    C = np.einsum("l,ljk->jk", np.asarray(yv, dtype=float), STRUCTURE)
    Z, Id = np.zeros((3, 3)), np.eye(3)
    return np.block([[C, Id], [-Id, Z]])


def tstark_jacobian(xg, yv, tau) -> np.ndarray:
    """Frame derivatives of all entries of ``x e^{(i+tau) U}``: shape ``(4, 6)``.

    Written for ``h = |Y|^2/2`` (so ``dU/dy^k = E_k``).
    """
    c = 1j + complex(tau)
    U = su2_element(yv)
    G = expm(c * U)
    cols = [(xg @ E @ G).ravel() for E in SU2_BASIS]
    for E in SU2_BASIS:
        cols.append((xg @ expm_frechet(c * U, c * E, compute_expm=False)).ravel())
    return np.array(cols).T


def tstark_classify(xg, yv, tau) -> str:
    """Classify using the three entries whose Jacobian is best conditioned."""
    A_all = tstark_jacobian(xg, yv, tau)
    W = tstark_symplectic_matrix(yv)
    best = None
    for drop in range(4):
        rows = [r for r in range(4) if r != drop]
        A = A_all[rows]
        s = np.linalg.svd(A, compute_uv=False)
        score = s[-1] / s[0]
        if best is None or score > best[0]:
            best = (score, A)
    return str(classify_jacobian(best[1], W).tags[0])


def tstark_su2() -> ModelDescriptor:
    return ModelDescriptor("tstark-su2", {"h": "|Y|^2/2", "basis": "E_j = (i/2) sigma_j"}, None,
                           {"closed_form": tstark_closed_form, "potential": tstark_potential})


def tstark_torus() -> ModelDescriptor:
    return ModelDescriptor("tstark-torus", {"h": "y^2/2"}, tstark_torus_system(),
                           {"closed_form": torus_closed_form, "potential": tstark_potential})


MODELS = {
    "linear": linear,
    "quartic": quartic,
    "separable": separable,
    "tstark-torus": tstark_torus,
    "tstark-su2": tstark_su2,
}


def get_model(name: str, **params) -> ModelDescriptor:
    try:
        ctor = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return ctor(**params)
