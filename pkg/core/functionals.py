# core/functionals.py
"""
Lyapunov functionals and the formal metric of the gradient-flow structure.

    F[u] = int u'^(2-q) / ((2-q)(1-q)) - u^2 / (2 x^(2-q))      N >= 3
    G[u] = int u' (ln u' - 1) - u^2 / (2x)                      N = 2
    g_u(h, k) = int h k / (x^(2-q) u'^q)

Slopes are the P1 cell slopes; the u^2 and hk terms use the exact
power-weight cell integrals from weighted_norms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, List

import numpy as np

from core.errors import NonpositiveSlopeError, WrongFunctionalError
from core.profiles import ModelParams
from core.weighted_norms import GridFn, _check_origin, weighted_cell_products

if TYPE_CHECKING:
    from core.evolution import Trajectory

SLOPE_FLOOR = 1e-14


@dataclass(frozen=True)
class LyapunovSample:
    t: float
    value: float
    dissipation_estimate: float   # d/dt of value by finite difference


def _first_bad_cell(slopes: np.ndarray) -> None:
    bad = np.flatnonzero(slopes <= SLOPE_FLOOR)
    if bad.size:
        c = int(bad[0])
        raise NonpositiveSlopeError(c, float(slopes[c]))


def _half_weighted_square(u: GridFn, q: float) -> float:
    _check_origin(u)
    return 0.5 * float(np.sum(weighted_cell_products(u, u, q)))


def F_energy(u: GridFn, params: ModelParams) -> float:
    if params.N == 2:
        raise WrongFunctionalError("F is undefined for N = 2 (division by 1 - q); use G_energy")
    q = params.q
    s = np.clip(u.slopes, 0.0, None)
    gradient_part = float(np.sum(s ** (2.0 - q) * u.grid.dx)) / ((2.0 - q) * (1.0 - q))
    return gradient_part - _half_weighted_square(u, q)


def G_energy(u: GridFn) -> float:
    s = u.slopes
    _first_bad_cell(s)
    gradient_part = float(np.sum(s * (np.log(s) - 1.0) * u.grid.dx))
    return gradient_part - _half_weighted_square(u, 1.0)


def lyapunov(u: GridFn, params: ModelParams) -> float:
    """The functional that decreases along trajectories: G for N = 2, F otherwise."""
    if params.m == 0 and not np.any(u.values):
        return 0.0
    if params.N == 2:
        return G_energy(u)
    return F_energy(u, params)


def metric_g(u: GridFn, h: GridFn, k: GridFn, params: ModelParams) -> float:
    s = u.slopes
    _first_bad_cell(s)
    _check_origin(h)
    _check_origin(k)
    return float(np.sum(s ** (-params.q) * weighted_cell_products(h, k, params.q)))


def dissipation(u: GridFn, u_t: GridFn, params: ModelParams) -> float:
    """g_u(u_t, u_t), equal to -dF/dt (or -dG/dt) along exact trajectories."""
    if not np.any(u_t.values):
        return 0.0
    return metric_g(u, u_t, u_t, params)


def second_variation(u: GridFn, h: GridFn, params: ModelParams, eps: float = 1e-4) -> float:
    """Centred second difference of the Lyapunov functional at u along h."""
    up = GridFn(u.grid, u.values + eps * h.values)
    um = GridFn(u.grid, u.values - eps * h.values)
    return (lyapunov(up, params) - 2.0 * lyapunov(u, params) + lyapunov(um, params)) / (eps * eps)


# ---------------- Trajectory monitors ----------------
def lyapunov_series(traj: "Trajectory") -> List[LyapunovSample]:
    out: List[LyapunovSample] = []
    prev = None
    for d in traj.diagnostics:
        rate = 0.0 if prev is None or d.t == prev.t else (d.lyapunov - prev.lyapunov) / (d.t - prev.t)
        out.append(LyapunovSample(d.t, d.lyapunov, rate))
        prev = d
    return out


def dissipation_residual(traj: "Trajectory") -> np.ndarray:
    """
    Per snapshot interval |dL/dt + g_u(u_t, u_t)| with dL/dt the difference
    quotient of the Lyapunov values and the dissipation averaged over the two
    ends. Expected O(dt) + O(n^-1) on densely sampled stretches.
    """
    diags = traj.diagnostics
    res = []
    for d0, d1 in zip(diags[:-1], diags[1:]):
        if d1.t <= d0.t:
            continue
        rate = (d1.lyapunov - d0.lyapunov) / (d1.t - d0.t)
        res.append(abs(rate + 0.5 * (d0.dissipation + d1.dissipation)))
    return np.asarray(res)


def dissipation_residual_G(traj: "Trajectory") -> np.ndarray:
    if traj.params.N != 2:
        raise WrongFunctionalError(f"G dissipation needs N = 2, trajectory has N = {traj.params.N}")
    return dissipation_residual(traj)


def is_nonincreasing(values: np.ndarray, rel_tol: float = 1e-8) -> bool:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return True
    jumps = v[1:] - v[:-1]
    return bool(np.all(jumps <= rel_tol * (1.0 + np.abs(v[:-1]))))
