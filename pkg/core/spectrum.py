# core/spectrum.py
"""
The weighted Hardy constant

    lambda_1(a) = inf  int h'^2 / U_a'^q  /  int h^2 / x^(2-q)     over h(0) = h(1) = 0,

computed as the smallest eigenvalue of the P1 pencil K h = lambda M h, plus the
linearized operator L_{U_a}, the nonlinear remainder F and the identities
that tie them to lambda_1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, eigh

from core.errors import DomainError, LinearAlgebraError, SpectralError
from core.logger import get_logger
from core.profiles import SteadyProfile, eval_dU, eval_dwa, eval_U, eval_wa
from core.weighted_norms import Grid, GridFn, cell_gauss, gauss_points, power_cell_mass, weighted_cell_products

log = get_logger(__name__)

RAYLEIGH_TOL = 1e-12
MAX_ITER = 2000
_STIFF_ORDER = 8


# ---------------- Pencil ----------------
@dataclass(frozen=True, eq=False)
class SpectralPencil:
    """Symmetric tridiagonal K and Mw restricted to the interior nodes 1..n-1."""
    grid: Grid
    a: float
    k_diag: np.ndarray
    k_off: np.ndarray
    m_diag: np.ndarray
    m_off: np.ndarray

    @property
    def size(self) -> int:
        return self.k_diag.size

    def _mul(self, diag: np.ndarray, off: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = diag * v
        out[:-1] += off * v[1:]
        out[1:] += off * v[:-1]
        return out

    def apply_K(self, v: np.ndarray) -> np.ndarray:
        return self._mul(self.k_diag, self.k_off, v)

    def apply_M(self, v: np.ndarray) -> np.ndarray:
        return self._mul(self.m_diag, self.m_off, v)

    def dense(self) -> Tuple[np.ndarray, np.ndarray]:
        K = np.diag(self.k_diag) + np.diag(self.k_off, 1) + np.diag(self.k_off, -1)
        M = np.diag(self.m_diag) + np.diag(self.m_off, 1) + np.diag(self.m_off, -1)
        return K, M

    def rayleigh(self, h: GridFn) -> float:
        v = h.values[1:-1]
        return float(v @ self.apply_K(v)) / float(v @ self.apply_M(v))


@dataclass(frozen=True)
class SpectralResult:
    lambda1: float
    phi1: GridFn
    iterations: int
    refinement_gap: float
    a: float

    @property
    def n(self) -> int:
        return self.phi1.grid.n


def _check_subcritical(profile: SteadyProfile, a: float) -> None:
    if not (0 < a < profile.A):
        raise DomainError(f"need 0 < a < A={profile.A:.10g}, got a={a}")


def stiffness_weights(grid: Grid, a: float, profile: SteadyProfile) -> np.ndarray:
    """Per-cell int U_a'^(-q) by Gauss-Legendre."""
    q = profile.q
    return cell_gauss(grid.nodes, lambda x: np.asarray(eval_dU(profile, a, x)) ** (-q), _STIFF_ORDER)


def assemble_pencil(grid: Grid, a: float, cell_kappa: np.ndarray, mass_power: float) -> SpectralPencil:
    """
    K from per-cell weight integrals kappa_c (slope^2 * kappa_c per cell), Mw
    from the exact power-weight cell integrals with exponent mass_power.
    """
    dx = grid.dx
    kc = cell_kappa / dx ** 2
    n = grid.n
    kd = np.zeros(n + 1)
    kd[:-1] += kc
    kd[1:] += kc
    ko = -kc

    mii, mij, mjj = power_cell_mass(grid.nodes, mass_power)
    md = np.zeros(n + 1)
    md[:-1] += mii
    md[1:] += mjj
    return SpectralPencil(grid, a, kd[1:-1], ko[1:-1], md[1:-1], mij[1:-1])


def assemble(grid: Grid, a: float, profile: SteadyProfile,
             stiffness_weight: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> SpectralPencil:
    """The pencil of int h'k'/U_a'^q against int hk/x^(2-q); stiffness_weight overrides 1/U_a'^q."""
    _check_subcritical(profile, a)
    if stiffness_weight is None:
        kappa = stiffness_weights(grid, a, profile)
    else:
        kappa = cell_gauss(grid.nodes, stiffness_weight, _STIFF_ORDER)
    return assemble_pencil(grid, a, kappa, profile.q - 2.0)


def hardy_pencil(grid: Grid) -> SpectralPencil:
    """Unit stiffness weight against int h^2/x^2; its lambda_1 tends to 1/4."""
    return assemble_pencil(grid, 0.0, grid.dx.copy(), -2.0)


# ---------------- Eigen solvers ----------------
def _factor_K(pencil: SpectralPencil) -> np.ndarray:
    ab = np.zeros((2, pencil.size))
    ab[0, 1:] = pencil.k_off
    ab[1, :] = pencil.k_diag
    try:
        return cholesky_banded(ab)
    except LinAlgError as e:
        raise LinearAlgebraError(f"stiffness matrix is not positive definite: {e}") from e


def _inverse_iteration(pencil: SpectralPencil, deflate: Optional[np.ndarray] = None,
                       tol: float = RAYLEIGH_TOL, max_iter: int = MAX_ITER) -> Tuple[float, np.ndarray, int]:
    chol = _factor_K(pencil)
    x = pencil.grid.nodes[1:-1]
    v = x * (1.0 - x)
    if deflate is not None:
        v = np.sin(2 * math.pi * x)
        v -= (deflate @ pencil.apply_M(v)) * deflate
    rho_prev = math.inf
    rho = math.nan
    for it in range(1, max_iter + 1):
        v = cho_solve_banded((chol, False), pencil.apply_M(v))
        if deflate is not None:
            v -= (deflate @ pencil.apply_M(v)) * deflate
        mv = pencil.apply_M(v)
        v /= math.sqrt(float(v @ mv))
        rho = float(v @ pencil.apply_K(v))
        if abs(rho - rho_prev) < tol * max(1.0, abs(rho)):
            return rho, v, it
        rho_prev = rho
    raise SpectralError(f"inverse iteration did not converge in {max_iter} iterations", rho)


def smallest_eigenpair(pencil: SpectralPencil, tol: float = RAYLEIGH_TOL,
                       max_iter: int = MAX_ITER) -> SpectralResult:
    lam, v, iters = _inverse_iteration(pencil, tol=tol, max_iter=max_iter)
    if np.mean(v) < 0:
        v = -v
    phi = np.concatenate([[0.0], v, [0.0]])
    log.debug("lambda_1=%.15g after %d iterations (n=%d)", lam, iters, pencil.grid.n)
    return SpectralResult(lam, GridFn(pencil.grid, phi), iters, math.nan, pencil.a)


def lambda1(a: float, grid: Grid, profile: SteadyProfile, refine: bool = True,
            tol: float = RAYLEIGH_TOL) -> SpectralResult:
    """Smallest eigenvalue on `grid`, with refinement_gap from a re-solve on the 2n grid."""
    res = smallest_eigenpair(assemble(grid, a, profile), tol=tol)
    if not refine:
        return res
    fine = smallest_eigenpair(assemble(grid.refined(), a, profile), tol=tol)
    gap = abs(res.lambda1 - fine.lambda1)
    if res.lambda1 <= 1.0 + gap:
        log.warning("lambda_1(a=%g) = %.12g not above 1 + gap (gap %.3e)", a, res.lambda1, gap)
    return SpectralResult(res.lambda1, res.phi1, res.iterations, gap, a)


def lambda2(pencil: SpectralPencil, first: SpectralResult, tol: float = RAYLEIGH_TOL) -> float:
    """Second eigenvalue by inverse iteration M-orthogonal to phi_1."""
    lam, _, _ = _inverse_iteration(pencil, deflate=first.phi1.values[1:-1], tol=tol)
    return lam


def dense_eigenvalues(pencil: SpectralPencil, k: int = 2) -> np.ndarray:
    """Lowest k generalized eigenvalues from a dense solve; an oracle for small n."""
    K, M = pencil.dense()
    return eigh(K, M, eigvals_only=True, subset_by_index=[0, k - 1])


# ---------------- Quadratic forms ----------------
def stiffness_form(h: GridFn, a: float, profile: SteadyProfile) -> float:
    """int h'^2 / U_a'^q for the P1 interpolant."""
    return float(np.sum(stiffness_weights(h.grid, a, profile) * h.slopes ** 2))


def beesack_terms(h: GridFn, a: float, profile: SteadyProfile, order: int = _STIFF_ORDER) -> Tuple[float, float, float]:
    """
    (int h'^2/U_a'^q, int h^2/x^(2-q), int (h' - (w_a'/w_a) h)^2 / U_a'^q).
    On the first cell h = beta x and h/w_a = beta / U_1'(ax), its value at 0 being beta.
    """
    _check_subcritical(profile, a)
    q = profile.q
    nodes = h.grid.nodes
    pts, wts, t = gauss_points(nodes, order)
    hv, slopes = h.values, h.slopes
    h_at = hv[:-1, None] * 0.5 * (1.0 - t) + hv[1:, None] * 0.5 * (1.0 + t)
    dh_at = np.broadcast_to(slopes[:, None], pts.shape)

    wa = np.asarray(eval_wa(profile, a, pts))
    if np.any(wa <= 0):
        raise DomainError("w_a <= 0 at a quadrature point")
    dwa = np.asarray(eval_dwa(profile, a, pts))
    ratio = h_at / wa
    beta = hv[1] / nodes[1]
    ratio[0] = beta / (wa[0] / pts[0])
    dU_q = np.asarray(eval_dU(profile, a, pts)) ** q

    stiff = float(np.sum(wts * dh_at ** 2 / dU_q))
    square = float(np.sum(wts * (dh_at - dwa * ratio) ** 2 / dU_q))
    mass = float(np.sum(weighted_cell_products(h, h, q)))
    return stiff, mass, square


def beesack_residual(h: GridFn, a: float, profile: SteadyProfile) -> float:
    stiff, mass, square = beesack_terms(h, a, profile)
    return abs(stiff - mass - square)


# ---------------- Linearized operator ----------------
def linearized_terms(x: np.ndarray, U: np.ndarray, dU: np.ndarray, h: np.ndarray,
                     dh: np.ndarray, ddh: np.ndarray, q: float) -> np.ndarray:
    """Pointwise x^(2-q) h'' + q U U'^(q-1) h' + U'^q h."""
    return x ** (2.0 - q) * ddh + q * U * dU ** (q - 1.0) * dh + dU ** q * h


def remainder_terms(U: np.ndarray, dU: np.ndarray, h: np.ndarray, dh: np.ndarray, q: float) -> np.ndarray:
    """Pointwise F = q h h' / U'^(1-q) + (U + h) U'^q [(1 + h'/U')^q - 1 - q h'/U']."""
    r = dh / dU
    base = 1.0 + r
    if np.any(base <= 0):
        raise DomainError(f"1 + h'/U_a' = {float(np.min(base)):.3e} <= 0: outside the linearization regime")
    bracket = base ** q - 1.0 - q * r
    return q * h * dh * dU ** (q - 1.0) + (U + h) * dU ** q * bracket


def pde_rhs_terms(x: np.ndarray, u: np.ndarray, du: np.ndarray, ddu: np.ndarray, q: float) -> np.ndarray:
    """Pointwise x^(2-q) u'' + u u'^q."""
    return x ** (2.0 - q) * ddu + u * np.maximum(du, 0.0) ** q


def _second_difference(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    hs, hd = x[1:-1] - x[:-2], x[2:] - x[1:-1]
    return 2.0 * ((v[2:] - v[1:-1]) / hd - (v[1:-1] - v[:-2]) / hs) / (hs + hd)


def apply_linearized(h: GridFn, a: float, profile: SteadyProfile, form: str = "expanded") -> GridFn:
    """
    Nodal L_{U_a} h with zero end values.

    form="expanded":   x^(2-q) h'' + q (U_a / U_a'^(1-q)) h' + U_a'^q h
    form="divergence": x^(2-q) U_a'^q (h' / U_a'^q)' + U_a'^q h
    """
    q = profile.q
    x = h.grid.nodes
    xi = x[1:-1]
    hv = h.values
    dU_i = np.asarray(eval_dU(profile, a, xi))
    out = np.zeros_like(x)
    if form == "expanded":
        U_i = np.asarray(eval_U(profile, a, xi))
        dh = np.gradient(hv, x, edge_order=2)[1:-1]
        out[1:-1] = linearized_terms(xi, U_i, dU_i, hv[1:-1], dh, _second_difference(hv, x), q)
    elif form == "divergence":
        rho = np.asarray(eval_dU(profile, a, h.grid.midpoints)) ** (-q)
        flux = rho * h.slopes
        div = 2.0 * (flux[1:] - flux[:-1]) / (x[2:] - x[:-2])
        out[1:-1] = xi ** (2.0 - q) * dU_i ** q * div + dU_i ** q * hv[1:-1]
    else:
        raise ValueError(f"unknown form {form!r}")
    return GridFn(h.grid, out)


def remainder(h: GridFn, a: float, profile: SteadyProfile) -> GridFn:
    """Nodal F(x, h, h') with h' from second-order differences; zero at the ends."""
    x = h.grid.nodes
    xi = x[1:-1]
    dh = np.gradient(h.values, x, edge_order=2)[1:-1]
    U_i = np.asarray(eval_U(profile, a, xi))
    dU_i = np.asarray(eval_dU(profile, a, xi))
    out = np.zeros_like(x)
    out[1:-1] = remainder_terms(U_i, dU_i, h.values[1:-1], dh, profile.q)
    return GridFn(h.grid, out)


def parts_identity_sides(h: GridFn, a: float, profile: SteadyProfile) -> Tuple[float, float]:
    """
    (int h L h / (x^(2-q) U_a'^q), -[int h'^2/U_a'^q - int h^2/x^(2-q)]).
    The left side uses the divergence form of L and trapezoidal node weights;
    the right side uses the Gauss stiffness and exact weighted mass.
    """
    q = profile.q
    x = h.grid.nodes
    xi = x[1:-1]
    Lh = apply_linearized(h, a, profile, form="divergence").values[1:-1]
    dU_i = np.asarray(eval_dU(profile, a, xi))
    omega = 0.5 * (x[2:] - x[:-2])
    left = float(np.sum(omega * h.values[1:-1] * Lh / (xi ** (2.0 - q) * dU_i ** q)))

    mass = float(np.sum(weighted_cell_products(h, h, q)))
    right = -(stiffness_form(h, a, profile) - mass)
    return left, right


def parts_identity_residual(h: GridFn, a: float, profile: SteadyProfile) -> float:
    left, right = parts_identity_sides(h, a, profile)
    return abs(left - right)
