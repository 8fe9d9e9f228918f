# core/profiles.py
"""
Steady states of the degenerate problem u_t = x^(2-q) u_xx + u u_x^q, q = 2/N.

All steady states are dilations U_a(x) = U_1(ax) of one master profile U_1,
the solution of  x^(2-q) U'' + U U'^q = 0,  U(0) = 0, U'(0) = 1.
U_1 is integrated once, tabulated, and evaluated by cubic Hermite
interpolation on the tabulated (U_1, U_1') pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import bisect
from scipy.special import gamma

from core.errors import (
    DomainError,
    ModelError,
    ModelViolationError,
    ProfileIntegrationError,
    ProfileRangeError,
    SupercriticalMassError,
)
from core.logger import get_logger

log = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]

# ---------------- Tabulation settings ----------------
X_MAX = 64.0
_GEOM_END = 0.1          # geometric sampling on [x0, 0.1] resolves the x^q terms
_GEOM_SAMPLES = 1200
_UNIFORM_STEP = 2e-3
_FLAT_SAMPLES = 128      # constant continuation U_1 = M beyond A (N >= 3)


# ---------------- Model parameters ----------------
@dataclass(frozen=True)
class ModelParams:
    N: int
    m: float = 0.0

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 2:
            raise ModelError(f"N must be an integer >= 2, got {self.N!r}")
        m = float(self.m)
        if not math.isfinite(m) or m < 0:
            raise ModelError(f"boundary mass m must be finite and >= 0, got {self.m!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "m", m)

    @property
    def q_exact(self) -> Fraction:
        return Fraction(2, self.N)

    @property
    def q(self) -> float:
        return 2.0 / self.N


@dataclass(frozen=True, eq=False)
class SteadyProfile:
    N: int
    xs: np.ndarray
    U1: np.ndarray
    dU1: np.ndarray
    A: float          # math.inf for N = 2
    M: float
    tol: float
    x_switch: float   # series / integrator hand-over point
    _u_spline: CubicHermiteSpline = field(init=False, repr=False)
    _du_spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        for arr in (self.xs, self.U1, self.dU1):
            arr.setflags(write=False)
        q = self.q
        xs, U, dU = self.xs[1:], self.U1[1:], self.dU1[1:]
        ddU = -U * dU ** q / xs ** (2.0 - q)
        object.__setattr__(self, "_u_spline", CubicHermiteSpline(xs, U, dU))
        object.__setattr__(self, "_du_spline", CubicHermiteSpline(xs, dU, ddU))

    @property
    def q(self) -> float:
        return 2.0 / self.N

    @property
    def x_last(self) -> float:
        return float(self.xs[-1])


# ---------------- Local series at the degenerate point ----------------
def _series_U(s: np.ndarray, q: float) -> np.ndarray:
    return s - s ** (1.0 + q) / (q * (1.0 + q))


def _series_dU(s: np.ndarray, q: float) -> np.ndarray:
    return 1.0 - s ** q / q


# ---------------- Construction ----------------
def build_profile(N: int, tol: float = 1e-10, x_max: float = X_MAX, method: str = "DOP853") -> SteadyProfile:
    """
    Integrate the master profile U_1 for dimension N.

    The integration starts at x0 = tol^(1/(1+q)) from the two-term series
    U_1 = x - x^(1+q)/(q(1+q)). For N >= 3 the slope is carried as
    v = U_1'^(1-q), which satisfies v' = -(1-q) U_1 / x^(2-q) and crosses zero
    transversally at A; U_1' itself vanishes there to order 1/(1-q).
    """
    if isinstance(N, bool) or int(N) != N or N < 2:
        raise ModelError(f"N must be an integer >= 2, got {N!r}")
    if not tol > 0:
        raise ModelError(f"tol must be positive, got {tol!r}")
    N = int(N)
    q = 2.0 / N
    x0 = tol ** (1.0 / (1.0 + q))
    slope_form = N == 2

    if slope_form:
        y0 = [float(_series_U(x0, q)), float(_series_dU(x0, q))]

        def rhs(x, y):
            return [y[1], -y[0] * max(y[1], 0.0) ** q / x ** (2.0 - q)]

        def event(x, y):
            return y[1]
    else:
        p = 1.0 / (1.0 - q)
        y0 = [float(_series_U(x0, q)), float(_series_dU(x0, q) ** (1.0 - q))]

        def rhs(x, y):
            return [max(y[1], 0.0) ** p, -(1.0 - q) * y[0] / x ** (2.0 - q)]

        def event(x, y):
            return y[1]

    event.terminal = True
    event.direction = -1

    try:
        sol = solve_ivp(rhs, (x0, x_max), y0, method=method, rtol=tol, atol=tol * 1e-3,
                        dense_output=True, events=event)
    except Exception as e:
        raise ProfileIntegrationError(f"{method} integration failed: {e}", last_x=x0) from e
    if sol.status == -1:
        raise ProfileIntegrationError(f"{method}: {sol.message}", last_x=float(sol.t[-1]))

    hits = sol.t_events[0]
    if len(hits):
        A = float(hits[0])
        end = A
    elif N == 2:
        A = math.inf
        end = float(sol.t[-1])
    else:
        raise ModelViolationError(f"N={N}: U_1' did not vanish before x_max={x_max}")

    geom_end = min(_GEOM_END, 0.5 * end)
    geom = np.geomspace(x0, geom_end, _GEOM_SAMPLES)
    k = max(int(math.ceil((end - geom_end) / _UNIFORM_STEP)), 1)
    uniform = np.linspace(geom_end, end, k + 1)[1:]
    xs_ode = np.concatenate([geom, uniform])

    Y = sol.sol(xs_ode)
    U = Y[0]
    if slope_form:
        dU = Y[1]
    else:
        dU = np.sign(Y[1]) * np.abs(Y[1]) ** (1.0 / (1.0 - q))
    if dU.min() < -tol:
        bad = int(np.argmin(dU))
        raise ModelViolationError(f"U_1' = {dU[bad]:.3e} < -tol at x = {xs_ode[bad]:.6g}")
    dU = np.clip(dU, 0.0, None)

    if math.isfinite(A):
        M = float(Y[0][-1])
        dU[-1] = 0.0
        flat = np.linspace(A, max(x_max, A + 1.0), _FLAT_SAMPLES + 1)[1:]
        xs_ode = np.concatenate([xs_ode, flat])
        U = np.concatenate([U, np.full(flat.size, M)])
        dU = np.concatenate([dU, np.zeros(flat.size)])
    else:
        M = 2.0

    xs = np.concatenate([[0.0], xs_ode])
    U = np.concatenate([[0.0], U])
    dU = np.concatenate([[1.0], dU])
    log.debug("profile N=%d: A=%s M=%.12g samples=%d nfev=%d", N, A, M, xs.size, sol.nfev)
    return SteadyProfile(N=N, xs=xs, U1=U, dU1=dU, A=A, M=M, tol=tol, x_switch=x0)


# ---------------- Master-profile evaluation ----------------
def _U1(p: SteadyProfile, s: np.ndarray) -> np.ndarray:
    near = s < p.x_switch
    out = p._u_spline(np.where(near, p.x_switch, s))
    return np.where(near, _series_U(s, p.q), out)


def _dU1(p: SteadyProfile, s: np.ndarray) -> np.ndarray:
    near = s < p.x_switch
    out = p._du_spline(np.where(near, p.x_switch, s))
    return np.clip(np.where(near, _series_dU(s, p.q), out), 0.0, None)


def _s_ddU1(p: SteadyProfile, s: np.ndarray) -> np.ndarray:
    """s * U_1''(s), continuous at s = 0 where it vanishes like -s^q."""
    q = p.q
    safe = np.where(s > 0, s, 1.0)
    ratio = np.where(s > 0, _U1(p, safe) / safe, 1.0)
    return np.where(s > 0, -ratio * _dU1(p, s) ** q * safe ** q, 0.0)


def _scaled(p: SteadyProfile, a: float, x: ArrayLike) -> Tuple[np.ndarray, bool]:
    if a < 0:
        raise DomainError(f"dilation parameter must be >= 0, got {a}")
    scalar = np.ndim(x) == 0
    s = a * np.asarray(x, dtype=float)
    if np.any(s > p.x_last * (1.0 + 1e-12)) or np.any(s < 0):
        raise ProfileRangeError(
            f"a*x outside tabulated range [0, {p.x_last:.6g}] (max a*x = {float(np.max(s)):.6g})"
        )
    return np.minimum(s, p.x_last), scalar


def _out(values: np.ndarray, scalar: bool) -> ArrayLike:
    return float(values) if scalar else values


# ---------------- Public operations ----------------
def eval_U(p: SteadyProfile, a: float, x: ArrayLike) -> ArrayLike:
    """U_a(x) = U_1(ax)."""
    s, scalar = _scaled(p, a, x)
    return _out(_U1(p, s), scalar)


def eval_dU(p: SteadyProfile, a: float, x: ArrayLike) -> ArrayLike:
    """d/dx U_a(x) = a U_1'(ax)."""
    s, scalar = _scaled(p, a, x)
    return _out(a * _dU1(p, s), scalar)


def eval_ddU(p: SteadyProfile, a: float, x: ArrayLike) -> ArrayLike:
    """U_a''(x) from the steady equation; infinite at x = 0 when N >= 3."""
    s, scalar = _scaled(p, a, x)
    with np.errstate(divide="ignore"):
        val = np.where(s > 0, a * a * _s_ddU1(p, s) / np.where(s > 0, s, 1.0),
                       -a * a if p.N == 2 else -np.inf)
    return _out(val, scalar)


def _check_subcritical_a(p: SteadyProfile, a: float) -> None:
    if not (0 < a < p.A):
        raise DomainError(f"need 0 < a < A={p.A:.10g}, got a={a}")


def eval_wa(p: SteadyProfile, a: float, x: ArrayLike) -> ArrayLike:
    """w_a(x) = d/da U_a(x) = x U_1'(ax)."""
    _check_subcritical_a(p, a)
    s, scalar = _scaled(p, a, x)
    return _out(np.asarray(x, dtype=float) * _dU1(p, s), scalar)


def eval_dwa(p: SteadyProfile, a: float, x: ArrayLike) -> ArrayLike:
    """d/dx w_a(x) = U_1'(ax) + ax U_1''(ax)."""
    _check_subcritical_a(p, a)
    s, scalar = _scaled(p, a, x)
    return _out(_dU1(p, s) + _s_ddU1(p, s), scalar)


def solve_a_of_m(p: SteadyProfile, m: float, tol: Optional[float] = None) -> float:
    """Dilation a(m) of the unique steady state with U_a(1) = m, by bisection."""
    if not math.isfinite(m) or m < 0:
        raise ModelError(f"m must be finite and >= 0, got {m}")
    if m >= p.M:
        raise SupercriticalMassError(m, p.M)
    if m == 0:
        return 0.0
    tol = p.tol if tol is None else tol

    if math.isfinite(p.A):
        hi = p.A
    else:
        hi = 1.0
        while float(_U1(p, np.asarray(hi))) <= m:
            hi *= 2.0
            if hi > p.x_last:
                raise ProfileRangeError(
                    f"a(m) for m={m} exceeds tabulated range {p.x_last:.6g}; rebuild with larger x_max"
                )
        hi = min(hi, p.x_last)

    a = bisect(lambda s: float(_U1(p, np.asarray(s))) - m, 0.0, hi, xtol=1e-15, maxiter=400)
    resid = abs(float(_U1(p, np.asarray(a))) - m)
    if resid > tol:
        log.warning("a(m=%g) residual %.3e above tol %.1e", m, resid, tol)
    return float(a)


def sample_steady(p: SteadyProfile, a: float, nodes: np.ndarray) -> np.ndarray:
    """U_a on grid nodes with the endpoint value 0 exact."""
    values = np.asarray(eval_U(p, a, nodes), dtype=float)
    values[nodes == 0] = 0.0
    return values


def ode_residual(p: SteadyProfile) -> float:
    """Max of |x^(2-q) U_1'' + U_1 U_1'^q| at midpoints of the integrated samples."""
    q = p.q
    hi = p.A if math.isfinite(p.A) else p.x_last
    xs = p.xs[(p.xs >= p.x_switch) & (p.xs <= hi)]
    mids = 0.5 * (xs[1:] + xs[:-1])
    ddU = p._du_spline.derivative()(mids)
    res = mids ** (2.0 - q) * ddU + _U1(p, mids) * _dU1(p, mids) ** q
    return float(np.max(np.abs(res)))


def cell_mass(m: float, N: int) -> float:
    """Total cell mass of the radial chemotaxis system with boundary value m (8*pi*m/2 for N = 2)."""
    sphere = 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)
    return float(sphere * N ** (N - 1) * m)
