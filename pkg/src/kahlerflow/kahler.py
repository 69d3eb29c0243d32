"""Evolution of charts, metrics, potentials and prequantum data under e^{tau X_h}.

Conventions
-----------
* Real coordinates ``x = (x^1, ..., x^{2n})`` and a constant symplectic matrix
  ``W`` with ``omega(u, v) = u^T W v``.
* ``A = dz/dx`` is the ``n x 2n`` holomorphic Jacobian of a chart and
  ``B = [A; conj(A)]`` the Jacobian of ``w = (z, zbar)``.
* In the ``w`` frame ``omega`` has matrix ``W' = B^{-T} W B^{-1}`` and the
  Hermitian metric is ``g_{jk} = -i W'[j, n + k]``, so that
  ``omega = i g_{jk} dz^j ^ dzbar^k`` and ``g = d_j dbar_k kappa``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .lieseries import (
    DEFAULT_ORDER,
    TAU,
    Derivation,
    SymplecticForm,
    TauSeries,
    conjugate_series,
    hamiltonian_field,
    horner,
    lie_exp,
)
from .symcore import (
    Expr,
    GridSpec,
    compile_expr,
    conjugate,
    const,
    differentiate,
    normalize,
    substitute,
    sym,
)

RANK_RTOL = 1e-8

KAHLER = "kahler"
PSEUDO_KAHLER = "pseudo_kahler"
REAL = "real"
MIXED = "mixed"
DEGENERATE = "degenerate"
CLASSES = (KAHLER, PSEUDO_KAHLER, REAL, MIXED, DEGENERATE)


class ChartInversionError(ArithmeticError):
    """Newton inversion of a chart map did not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# points


def as_coord_array(coords: Sequence[str], point) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Stack a point (mapping or array) into shape ``(len(coords), M)``.

    Returns the stacked array and the original broadcast shape.
    """
    if isinstance(point, Mapping):
        vals = [np.asarray(point[c]) for c in coords]
    else:
        arr = np.asarray(point)
        if arr.shape[0] != len(coords):
            raise ValueError(f"expected leading dimension {len(coords)}")
        vals = list(arr)
    shape = np.broadcast_shapes(*(v.shape for v in vals))
    X = np.stack([np.broadcast_to(v, shape).ravel() for v in vals])
    return X, shape


# ---------------------------------------------------------------------------
# Hamiltonian systems


@dataclass(frozen=True)
class HamSystem:
    """Phase space data: ``omega``, ``h``, ``theta`` with ``omega = -d theta``,
    an initial holomorphic chart and its Kaehler potential ``kappa0``."""

    omega: SymplecticForm
    h: Expr
    theta: Tuple[Expr, ...]
    chart: Tuple[Expr, ...]
    kappa0: Expr
    domain: Optional[GridSpec] = None
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "h", normalize(self.h))
        object.__setattr__(self, "theta", tuple(normalize(c) for c in self.theta))
        object.__setattr__(self, "chart", tuple(normalize(c) for c in self.chart))
        object.__setattr__(self, "kappa0", normalize(self.kappa0))
        if len(self.theta) != len(self.coords):
            raise ValueError("theta needs one component per coordinate")
        if 2 * len(self.chart) != len(self.coords):
            raise ValueError("a chart has half as many functions as there are coordinates")
        allowed = set(self.coords)
        for e in (self.h, self.kappa0, *self.theta, *self.chart):
            extra = e.free_symbols - allowed
            if extra:
                raise ValueError(f"expression uses undeclared symbol {sorted(extra)[0]!r}")

    @property
    def coords(self) -> Tuple[str, ...]:
        return self.omega.coords

    @property
    def n(self) -> int:
        return len(self.chart)

    @cached_property
    def field(self) -> Derivation:
        return hamiltonian_field(self.h, self.omega)

    @cached_property
    def W(self) -> np.ndarray:
        return self.omega.numeric()

    def theta_of(self, X: Derivation) -> Expr:
        return normalize(sum((t * a for t, a in zip(self.theta, X.components)), const(0)))

    @cached_property
    def chart_jacobian_exprs(self):
        return [[differentiate(z, x) for x in self.coords] for z in self.chart]

    def is_affine_chart(self) -> bool:
        return all(d.poly.constant_value() is not None for row in self.chart_jacobian_exprs for d in row)

    # invariant checks -----------------------------------------------------
    def d_theta_plus_omega(self) -> list:
        """Components of ``d theta + omega``; all must normalize to zero."""
        out = []
        xs = self.coords
        for j in range(len(xs)):
            for k in range(j + 1, len(xs)):
                dth = differentiate(self.theta[k], xs[j]) - differentiate(self.theta[j], xs[k])
                out.append(normalize(dth + self.omega.matrix[j][k]))
        return out

    def potential_hypothesis_residual(self, grid: GridSpec) -> float:
        """max |theta(X_z) + (i/2) X_z(kappa0)| over the grid, for each chart function."""
        pts = grid.points()
        worst = 0.0
        for z in self.chart:
            Xz = hamiltonian_field(z, self.omega)
            lhs = self.theta_of(Xz)
            rhs = normalize(const(-0.5j) * Xz(self.kappa0))
            f = compile_expr(normalize(lhs - rhs), self.coords)
            vals = np.broadcast_to(np.asarray(f(*(pts[c] for c in self.coords)), dtype=complex), (grid.size,))
            worst = max(worst, float(np.max(np.abs(vals))))
        return worst

    def validate(self, grid: GridSpec | None = None, tol: float = 1e-10) -> Dict[str, object]:
        grid = grid or self.domain
        exact = all(c.is_zero() for c in self.d_theta_plus_omega())
        report: Dict[str, object] = {"d_theta_plus_omega_zero": exact}
        if grid is not None:
            res = self.potential_hypothesis_residual(grid)
            es = evolve_chart(self, 1)
            tags = es.classify_points(0.0, grid.points())[0]
            report["potential_hypothesis_residual"] = res
            report["initial_kahler"] = bool(np.all(tags == KAHLER))
            report["ok"] = exact and res <= tol and report["initial_kahler"]
        else:
            report["ok"] = exact
        return report


# ---------------------------------------------------------------------------
# classification core


@dataclass
class JacobianAnalysis:
    tags: np.ndarray
    rank_A: np.ndarray
    rank_B: np.ndarray
    G: np.ndarray
    eigenvalues: np.ndarray
    Wprime: np.ndarray


def classify_jacobian(A, W, rtol: float = RANK_RTOL) -> JacobianAnalysis:
    """Classify a batch of holomorphic Jacobians ``A`` of shape ``(M, n, 2n)``.

    * ``degenerate``: the ``dz^j`` are linearly dependent (rank A < n);
    * ``real``: rank [A; conj A] = n, the span is closed under conjugation;
    * ``mixed``: n < rank [A; conj A] < 2n;
    * otherwise the metric decides: ``kahler`` if positive definite,
      ``pseudo_kahler`` if nondegenerate and not positive, ``mixed`` if singular.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim == 2:
        A = A[None]
    M, n, m = A.shape
    B = np.concatenate([A, A.conj()], axis=1)
    sB = np.linalg.svd(B, compute_uv=False)
    sA = np.linalg.svd(A, compute_uv=False)
    scale = np.maximum(sB[:, :1], np.finfo(float).tiny)
    rank_B = np.sum(sB > rtol * scale, axis=1)
    rank_A = np.sum(sA > rtol * scale, axis=1)
    G = np.full((M, n, n), np.nan + 0j)
    Wp = np.full((M, m, m), np.nan + 0j)
    eig = np.full((M, n), np.nan)
    full = rank_B == m
    if np.any(full):
        Binv = np.linalg.inv(B[full])
        Wf = np.swapaxes(Binv, 1, 2) @ np.asarray(W, dtype=complex) @ Binv
        Wp[full] = Wf
        Gf = -1j * Wf[:, :n, n:]
        G[full] = Gf
        eig[full] = np.linalg.eigvalsh(0.5 * (Gf + np.conj(np.swapaxes(Gf, 1, 2))))
    tags = np.empty(M, dtype=object)
    for k in range(M):
        if rank_A[k] < n:
            tags[k] = DEGENERATE
        elif rank_B[k] == n:
            tags[k] = REAL
        elif rank_B[k] < m:
            tags[k] = MIXED
        else:
            ev = eig[k]
            thr = rtol * np.max(np.abs(ev))
            if np.any(np.abs(ev) <= thr):
                tags[k] = MIXED
            elif np.all(ev > 0):
                tags[k] = KAHLER
            else:
                tags[k] = PSEUDO_KAHLER
    return JacobianAnalysis(tags, rank_A, rank_B, G, eig, Wp)


@dataclass(frozen=True)
class HermitianMetric:
    """Metric ``g_{jk}`` at a point; ``value`` is ``None`` when the chart
    degenerates there (then ``tag`` is ``"degenerate"``)."""

    value: Optional[np.ndarray]
    tag: str
    eigenvalues: Optional[np.ndarray] = None

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        if self.value is None:
            return True
        return bool(np.max(np.abs(self.value - self.value.conj().T)) <= tol * max(1.0, np.max(np.abs(self.value))))


# ---------------------------------------------------------------------------
# evolved charts


@dataclass(frozen=True)
class EvolvedStructure:
    """Chart series ``z_tau`` and ``zbar_tau`` of a ``HamSystem`` through order ``N``."""

    system: HamSystem
    N: int
    z: Tuple[TauSeries, ...]
    zbar: Tuple[TauSeries, ...]

    @property
    def coords(self):
        return self.system.coords

    @property
    def n(self):
        return self.system.n

    @cached_property
    def dz(self) -> Tuple[Tuple[TauSeries, ...], ...]:
        """``dz[i][a]``: series of ``d z_tau^i / dx^a``."""
        return tuple(
            tuple(s.map(lambda c, x=x: differentiate(c, x)) for x in self.coords) for s in self.z
        )

    @cached_property
    def d2z(self):
        """``d2z[i][a][b]``: series of second derivatives."""
        return tuple(
            tuple(tuple(s.map(lambda c, x=x: differentiate(c, x)) for x in self.coords) for s in row)
            for row in self.dz
        )

    @cached_property
    def _compiled(self):
        comp = lambda s: [compile_expr(c, self.coords) for c in s.coeffs]
        return {
            "z": [comp(s) for s in self.z],
            "dz": [[comp(s) for s in row] for row in self.dz],
        }

    @cached_property
    def _compiled_d2(self):
        comp = lambda s: [compile_expr(c, self.coords) for c in s.coeffs]
        return [[[comp(s) for s in r2] for r2 in row] for row in self.d2z]

    @staticmethod
    def _eval(fns, tau, X):
        vals = []
        with np.errstate(all="ignore"):
            for f in fns:
                vals.append(np.broadcast_to(np.asarray(f(*X), dtype=complex), X.shape[1:]))
            return horner(vals, tau)

    def chart_values(self, tau, X) -> np.ndarray:
        """``z_tau`` at stacked points ``X`` (shape ``(2n, M)``): shape ``(n, M)``."""
        return np.array([self._eval(f, tau, X) for f in self._compiled["z"]])

    def jacobian(self, tau, X) -> np.ndarray:
        """Holomorphic Jacobian, shape ``(M, n, 2n)``."""
        J = np.array([[self._eval(f, tau, X) for f in row] for row in self._compiled["dz"]])
        return np.moveaxis(J, -1, 0)

    def hessians(self, tau, X) -> np.ndarray:
        """Second derivatives of ``z_tau``, shape ``(M, n, 2n, 2n)``."""
        H = np.array([[[self._eval(f, tau, X) for f in r2] for r2 in row] for row in self._compiled_d2])
        return np.moveaxis(H, -1, 0)

    def analyse(self, tau, point) -> JacobianAnalysis:
        X, _ = as_coord_array(self.coords, point)
        tau = _broadcast_tau(tau, X.shape[1])
        return classify_jacobian(self.jacobian(tau, X), self.system.W)

    def classify_points(self, tau, point):
        X, shape = as_coord_array(self.coords, point)
        an = self.analyse(tau, X)
        return an.tags.reshape(shape), an

    def riemannian(self, tau, X) -> np.ndarray:
        """``Gamma = W J_tau`` at stacked points, shape ``(M, 2n, 2n)``.

        ``J_tau = B^{-1} diag(i, -i) B`` is the complex structure with
        ``dz_tau`` of type (1,0).
        """
        tau = _broadcast_tau(tau, X.shape[1])
        A = self.jacobian(tau, X)
        B = np.concatenate([A, A.conj()], axis=1)
        n = self.n
        D = np.concatenate([np.full(n, 1j), np.full(n, -1j)])
        J = np.linalg.solve(B, D[None, :, None] * B)
        return (self.system.W[None] @ J).real


def _broadcast_tau(tau, M):
    t = np.asarray(tau, dtype=complex)
    if t.ndim == 0:
        return complex(t)
    return np.broadcast_to(t.ravel(), (M,)) if t.size in (1, M) else t


@lru_cache(maxsize=64)
def evolve_chart(system: HamSystem, N: int = DEFAULT_ORDER) -> EvolvedStructure:
    """``z_tau^i = e^{tau X_h} z^i`` through order ``N``."""
    z = tuple(lie_exp(system.field, c, N) for c in system.chart)
    return EvolvedStructure(system, N, z, tuple(conjugate_series(s) for s in z))


def _single_point(coords, p):
    X, shape = as_coord_array(coords, p)
    if X.shape[1] != 1:
        raise ValueError("expected a single point")
    return X


def metric_at(es: EvolvedStructure, tau, p) -> HermitianMetric:
    """Hermitian metric of ``omega`` in the evolved chart at a point."""
    an = es.analyse(tau, _single_point(es.coords, p))
    if an.rank_B[0] < 2 * es.n:
        return HermitianMetric(None, DEGENERATE)
    return HermitianMetric(an.G[0], an.tags[0], an.eigenvalues[0])


def riemannian_metric_at(es: EvolvedStructure, tau, p) -> np.ndarray:
    """``gamma_tau(u, v) = omega(u, J_tau v)`` as a symmetric real matrix."""
    X = _single_point(es.coords, p)
    an = es.analyse(tau, X)
    if an.rank_B[0] < 2 * es.n:
        raise ArithmeticError("evolved chart is degenerate at this point")
    return es.riemannian(tau, X)[0]


def classify(es: EvolvedStructure, tau, p) -> str:
    return str(es.analyse(tau, _single_point(es.coords, p)).tags[0])


def inverse_g(es: EvolvedStructure, tau, point) -> np.ndarray:
    """``1/g`` for one-dimensional charts, finite through the degeneration locus.

    ``1/g = i (z_x zbar_y - z_y zbar_x) / omega_xy``.
    """
    if es.n != 1:
        raise ValueError("1/g is only defined for n = 1")
    X, shape = as_coord_array(es.coords, point)
    A = es.jacobian(_broadcast_tau(tau, X.shape[1]), X)[:, 0, :]
    det = A[:, 0] * A[:, 1].conj() - A[:, 1] * A[:, 0].conj()
    return (1j * det / es.system.W[0, 1]).real.reshape(shape)


def two_zero_residual(es: EvolvedStructure, tau, point) -> float:
    """Max modulus of the (2,0) block of ``omega`` in the evolved chart."""
    an = es.analyse(tau, point)
    n = es.n
    blk = an.Wprime[:, :n, :n]
    ok = np.isfinite(blk).all(axis=(1, 2))
    return float(np.max(np.abs(blk[ok]))) if np.any(ok) else float("nan")


# ---------------------------------------------------------------------------
# potentials


@lru_cache(maxsize=64)
def alpha_series(system: HamSystem, N: int = DEFAULT_ORDER) -> TauSeries:
    """``alpha_tau = sum_{k>=1} tau^k X_h^{k-1}(theta(X_h)) / k!``."""
    if N < 1:
        raise ValueError("alpha needs order >= 1")
    X = system.field
    base = lie_exp(X, system.theta_of(X), N - 1)
    coeffs = [const(0)] + [normalize(c / k) for k, c in zip(range(1, N + 1), base.coeffs)]
    return TauSeries(TAU, tuple(coeffs))


@dataclass(frozen=True)
class PotentialFlow:
    """``psi_tau = -(i/2) e^{tau X_h} kappa0 + tau h - alpha_tau`` and
    ``kappa_tau = -2 Im psi_tau``."""

    system: HamSystem
    N: int
    kappa_series: TauSeries
    alpha: TauSeries

    @cached_property
    def psi_series(self) -> TauSeries:
        """``psi_tau`` as a single series (``h`` enters at order 1)."""
        coeffs = []
        for k in range(self.N + 1):
            c = const(-0.5j) * self.kappa_series.coeffs[k] - self.alpha.coeffs[k]
            if k == 1:
                c = c + self.system.h
            coeffs.append(normalize(c))
        return TauSeries(TAU, tuple(coeffs))

    @cached_property
    def _fns(self):
        return [compile_expr(c, self.system.coords) for c in self.psi_series.coeffs]

    def psi(self, tau, X) -> np.ndarray:
        tau = _broadcast_tau(tau, X.shape[1])
        return EvolvedStructure._eval(self._fns, tau, X)

    def kappa(self, tau, X) -> np.ndarray:
        return -2.0 * np.imag(self.psi(tau, X))


@lru_cache(maxsize=64)
def potential_flow(system: HamSystem, N: int = DEFAULT_ORDER) -> PotentialFlow:
    return PotentialFlow(system, N, lie_exp(system.field, system.kappa0, N), alpha_series(system, N))


def kahler_potential(system: HamSystem, N: int, tau, p, *, warn: bool = True):
    """``kappa_tau`` at a point or on stacked points.

    Emits a warning when a point is not in the Kaehler regime; the value is
    returned regardless.
    """
    X, shape = as_coord_array(system.coords, p)
    if warn:
        tags = evolve_chart(system, N).analyse(tau, X).tags
        if np.any(tags != KAHLER):
            warnings.warn("potential requested outside the Kaehler regime", RuntimeWarning, stacklevel=2)
    vals = potential_flow(system, N).kappa(tau, X)
    return float(vals[0]) if shape == () else vals.reshape(shape)


def potential_expr(system: HamSystem, N: int, tau_re: str = "a", tau_im: str = "b") -> Expr:
    """``kappa_tau`` as an expression in the coordinates and real symbols for
    ``Re tau`` and ``Im tau``.  Exact for terminating series."""
    tau = sym(tau_re) + const(1j) * sym(tau_im)
    psi = potential_flow(system, N).psi_series
    acc = const(0)
    for c in reversed(psi.coeffs):
        acc = acc * tau + c
    acc = normalize(acc)
    return normalize(const(1j) * (acc - conjugate(acc)))


# FD stencils ------------------------------------------------------------------


def _fd_grad_hess(f, X, step):
    """Central second-order gradient and Hessian of ``f`` at stacked points."""
    m, M = X.shape
    f0 = f(X)
    g = np.empty((M, m))
    H = np.empty((M, m, m))
    E = np.eye(m)[:, :, None] * step
    fp = [f(X + E[a]) for a in range(m)]
    fm = [f(X - E[a]) for a in range(m)]
    for a in range(m):
        g[:, a] = (fp[a] - fm[a]) / (2 * step)
        H[:, a, a] = (fp[a] - 2 * f0 + fm[a]) / step**2
        for b in range(a + 1, m):
            v = (f(X + E[a] + E[b]) - f(X + E[a] - E[b]) - f(X - E[a] + E[b]) + f(X - E[a] - E[b])) / (4 * step**2)
            H[:, a, b] = H[:, b, a] = v
    return g, H


@dataclass
class PotentialCheck:
    residual: float
    per_point: np.ndarray
    skipped: int


def verify_potential(system: HamSystem, es: EvolvedStructure, tau, grid, step: float = 1e-3, N: int | None = None) -> PotentialCheck:
    """Residual of ``omega = i d_tau dbar_tau kappa_tau`` on a grid.

    The complex Hessian of ``kappa_tau`` in the evolved chart is recovered
    from a finite-difference real Hessian via
    ``K = B^{-T} (H - sum_m kappa_{w_m} Hess(w_m)) B^{-1}`` with
    ``kappa_w = B^{-T} grad kappa``; the exact chart derivatives come from the
    series.  Non-Kaehler points are skipped and counted.
    """
    N = es.N if N is None else N
    pts = grid.points() if isinstance(grid, GridSpec) else grid
    X, _ = as_coord_array(system.coords, pts)
    tau_b = _broadcast_tau(tau, X.shape[1])
    an = classify_jacobian(es.jacobian(tau_b, X), system.W)
    keep = an.tags == KAHLER
    skipped = int(np.sum(~keep))
    if not np.any(keep):
        return PotentialCheck(float("nan"), np.array([]), skipped)
    X = X[:, keep]
    if np.ndim(tau_b):
        tau_b = tau_b[keep]
    pf = potential_flow(system, N)
    g, H = _fd_grad_hess(lambda Y: pf.kappa(tau_b, Y), X, step)
    n = system.n
    A = es.jacobian(tau_b, X)
    A2 = es.hessians(tau_b, X)
    B = np.concatenate([A, A.conj()], axis=1)
    B2 = np.concatenate([A2, A2.conj()], axis=1)
    BinvT = np.linalg.inv(np.swapaxes(B, 1, 2))
    kw = np.einsum("pij,pj->pi", BinvT, g.astype(complex))
    corr = np.einsum("pm,pmab->pab", kw, B2)
    K = BinvT @ (H - corr) @ np.swapaxes(BinvT, 1, 2)
    res = np.max(np.abs(K[:, :n, n:] - an.G[keep]), axis=(1, 2))
    return PotentialCheck(float(np.max(res)), res, skipped)


# ---------------------------------------------------------------------------
# real-time cocycle


def real_flow(system: HamSystem, N: int, s, X) -> np.ndarray:
    """Real-time flow map ``phi_s`` at stacked points via coordinate series."""
    coord_series = _coordinate_series(system, N)
    out = np.array([EvolvedStructure._eval(f, s, X) for f in coord_series])
    return out.real


@lru_cache(maxsize=64)
def _coordinate_series(system: HamSystem, N: int):
    return [
        [compile_expr(c, system.coords) for c in lie_exp(system.field, sym(x), N).coeffs]
        for x in system.coords
    ]


def real_time_cocycle_check(system: HamSystem, N: int, tau, s: float, grid) -> float:
    """max |kappa_{tau+s}(p) - kappa_tau(phi_s(p))| over the grid."""
    pts = grid.points() if isinstance(grid, GridSpec) else grid
    X, _ = as_coord_array(system.coords, pts)
    pf = potential_flow(system, N)
    lhs = pf.kappa(complex(tau) + float(s), X)
    rhs = pf.kappa(tau, real_flow(system, N, float(s), X))
    return float(np.max(np.abs(lhs - rhs)))


def real_time_cocycle_symbolic(system: HamSystem, N: int) -> Expr:
    """``kappa_{tau+s} - kappa_tau o phi_s`` as a normalized expression in the
    coordinates and the real symbols ``a = Re tau``, ``b = Im tau``, ``s``."""
    kap = potential_expr(system, N, "a", "b")
    s = sym("s")
    lhs = substitute(kap, {"a": sym("a") + s})
    flows = {}
    for x in system.coords:
        ser = lie_exp(system.field, sym(x), N)
        acc = const(0)
        for c in reversed(ser.coeffs):
            acc = acc * s + c
        flows[x] = acc
    rhs = substitute(kap, flows)
    return normalize(lhs - rhs)


# ---------------------------------------------------------------------------
# canonical forms and prequantum data


def evolve_canonical_form(es: EvolvedStructure, tau, p) -> np.ndarray:
    """Coefficients of ``dz_tau^1 ^ ... ^ dz_tau^n`` on the basis
    ``dx^{a_1} ^ ... ^ dx^{a_n}``, ``a_1 < ... < a_n`` in lexicographic order."""
    X = _single_point(es.coords, p)
    A = es.jacobian(tau, X)[0]
    n, m = A.shape
    return np.array([np.linalg.det(A[:, list(c)]) for c in itertools.combinations(range(m), n)])


def prequantum_evolution(system: HamSystem, N: int, tau, p):
    """``exp(i psi_tau)`` at a point or on stacked points."""
    X, shape = as_coord_array(system.coords, p)
    v = np.exp(1j * potential_flow(system, N).psi(tau, X))
    return complex(v[0]) if shape == () else v.reshape(shape)


@lru_cache(maxsize=64)
def _psi_field_fns(system: HamSystem, N: int):
    X = system.field
    pf = potential_flow(system, N)
    xs = system.coords
    d_psi = [compile_expr(X(c), xs) for c in pf.psi_series.coeffs]
    gen = normalize(system.h - system.theta_of(X))
    return d_psi, compile_expr(gen, xs)


def prequantum_ode_residual(system: HamSystem, N: int, t: float, grid, dt: float = 1e-4, stated_sign: bool = False) -> float:
    """Check the time derivative of ``F_t = exp(i psi_t)`` for real ``t``.

    Compares a central difference of ``F_t`` with ``X_h F + i (h - theta(X_h)) F``.
    ``stated_sign=True`` instead uses ``X_h F - i (h - theta(X_h)) F``, the
    generator with the opposite sign in front of the multiplication part.
    """
    pts = grid.points() if isinstance(grid, GridSpec) else grid
    X, _ = as_coord_array(system.coords, pts)
    pf = potential_flow(system, N)
    F = lambda s: np.exp(1j * pf.psi(s, X))
    dF = (F(t + dt) - F(t - dt)) / (2 * dt)
    d_psi, gen = _psi_field_fns(system, N)
    F0 = F(t)
    Xpsi = EvolvedStructure._eval(d_psi, t, X)
    mult = np.broadcast_to(np.asarray(gen(*X), dtype=complex), F0.shape)
    sign = -1.0 if stated_sign else 1.0
    rhs = 1j * Xpsi * F0 + sign * 1j * mult * F0
    return float(np.max(np.abs(dF - rhs)))


# ---------------------------------------------------------------------------
# bracket identities (exact, coefficient-wise)


def pushed_field_defect(es: EvolvedStructure, order: int = 6) -> Expr | int:
    """Compare ``X_{z_tau^i}`` with ``e^{tau ad X_h} X_{z^i}`` coefficient-wise.

    Returns the number of nonzero normalized component differences.
    """
    system = es.system
    X = system.field
    bad = 0
    for s in es.z:
        Y = hamiltonian_field(s.coeffs[0], system.omega)
        fact = 1
        for k in range(min(order, es.N) + 1):
            if k > 0:
                Y = X.bracket(Y)
                fact *= k
            lhs = hamiltonian_field(s.coeffs[k], system.omega)
            for a, b in zip(lhs.components, Y.components):
                if not normalize(a - b / fact).is_zero():
                    bad += 1
    return bad


def poisson_series(es: EvolvedStructure, i: int, j: int, order: int = 6) -> TauSeries:
    """Series of ``omega(X_{z_tau^i}, X_{z_tau^j})`` through ``order``."""
    system = es.system
    order = min(order, es.N)
    fields_i = [hamiltonian_field(c, system.omega) for c in es.z[i].coeffs[: order + 1]]
    fields_j = [hamiltonian_field(c, system.omega) for c in es.z[j].coeffs[: order + 1]]
    coeffs = []
    for m in range(order + 1):
        acc = const(0)
        for k in range(m + 1):
            acc = acc + system.omega.pair(fields_i[k].components, fields_j[m - k].components)
        coeffs.append(normalize(acc))
    return TauSeries(TAU, tuple(coeffs))


# ---------------------------------------------------------------------------
# chart maps


def chart_target(system: HamSystem, values: np.ndarray, seed: np.ndarray | None = None, tol: float = 1e-14, maxiter: int = 50) -> np.ndarray:
    """Real points ``q`` with ``z(q) = values`` (shape ``(n, M)``).

    Affine charts are inverted by a linear solve, others by Newton from ``seed``.
    """
    values = np.asarray(values, dtype=complex)
    if system.is_affine_chart():
        A0 = np.array([[complex(d.poly.constant_value()) for d in row] for row in system.chart_jacobian_exprs])
        zero = np.zeros(len(system.coords))
        c0 = np.array([complex(compile_expr(z, system.coords)(*zero)) for z in system.chart])
        rhs = values - c0[:, None]
        Mreal = np.concatenate([A0.real, A0.imag])
        return np.linalg.solve(Mreal, np.concatenate([rhs.real, rhs.imag]))
    es0 = evolve_chart(system, 0)
    q = np.array(seed, dtype=float)
    for _ in range(maxiter):
        F = es0.chart_values(0.0, q) - values
        r = float(np.max(np.abs(F)))
        if r <= tol * max(1.0, float(np.max(np.abs(values)))):
            return q
        A = es0.jacobian(0.0, q)
        J = np.concatenate([A.real, A.imag], axis=1)
        rhs = np.concatenate([F.real, F.imag]).T
        q = q - np.linalg.solve(J, rhs[..., None])[..., 0].T
    raise ChartInversionError("chart inversion did not converge", r)


def chart_map(es: EvolvedStructure, tau, point) -> np.ndarray:
    """``phi_tau`` with ``z o phi_tau = z_tau``, at stacked points."""
    X, _ = as_coord_array(es.coords, point)
    return chart_target(es.system, es.chart_values(_broadcast_tau(tau, X.shape[1]), X), seed=X)
