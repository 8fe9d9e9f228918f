# cli/validate.py
"""
Invariant suite grouped by topic. The default sizes run in a few minutes on a
laptop; full=True uses the acceptance sizes (n up to 4096, t_end = 30).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from core.errors import ChemLabError, LinearAlgebraError
from core.evolution import (
    EvolveConfig,
    discrete_steady_state,
    ordered_pair,
    run,
    x_integrator,
)
from core.functionals import dissipation_residual, is_nonincreasing
from core.logger import get_logger
from core.profiles import ModelParams, build_profile, eval_U, sample_steady, solve_a_of_m
from core.rate_analysis import fit_rate, norm_series, rate_consistency, smoothing_check, theoretical_rate
from core.spectrum import (
    assemble,
    beesack_residual,
    dense_eigenvalues,
    hardy_pencil,
    lambda1,
    lambda2,
    parts_identity_residual,
    smallest_eigenpair,
)
from core.weighted_norms import GridFn, make_grid
from cli.commands import effective_A

log = get_logger(__name__)

INJECTIONS = ("pencil-sign", "boundary-leak")


@dataclass
class GroupResult:
    name: str
    passed: bool
    detail: str
    warning_only: bool = False
    seconds: float = 0.0


@dataclass(frozen=True)
class Sizes:
    n_pencil: int
    n_beesack: int
    n_evolve: int
    dt: float
    t_fixed: float
    t_compare: float
    t_rate: float
    pairs: int
    smooth_h: int
    fixed_point_tol: Optional[float]
    cross_tol: float


QUICK = Sizes(n_pencil=256, n_beesack=1024, n_evolve=128, dt=1e-3, t_fixed=0.5, t_compare=1.0,
              t_rate=20.0, pairs=3, smooth_h=5, fixed_point_tol=None, cross_tol=2e-2)
FULL = Sizes(n_pencil=1024, n_beesack=4096, n_evolve=2048, dt=1e-4, t_fixed=1.0, t_compare=5.0,
             t_rate=30.0, pairs=10, smooth_h=20, fixed_point_tol=1e-6, cross_tol=5e-4)


class _Lab:
    """Profiles shared by the groups of one validation run."""

    def __init__(self):
        self._profiles: Dict[int, object] = {}

    def profile(self, N: int):
        if N not in self._profiles:
            self._profiles[N] = build_profile(N)
        return self._profiles[N]


def _smooth_tests(rng: np.random.Generator, count: int) -> List[Callable[[np.ndarray], np.ndarray]]:
    out = []
    for _ in range(count):
        c = rng.normal(size=3)
        c[0] = abs(c[0]) + 0.5
        out.append(lambda x, c=c: sum(ck * np.sin((k + 1) * math.pi * x) for k, ck in enumerate(c)))
    return out


# ---------------- groups ----------------
def group_profiles(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    p = lab.profile(2)
    x = np.linspace(0.0, 1.0, 10_000)
    err = max(float(np.max(np.abs(np.asarray(eval_U(p, a, x)) - 2 * a * x / (2 + a * x)))) for a in (0.5, 2.0, 10.0))
    a_err = max(abs(solve_a_of_m(p, m) - m / (1 - m / 2)) for m in (0.5, 1.0, 1.5))
    ok = err <= 1e-8 and abs(p.M - 2.0) <= 1e-10 and a_err <= 1e-8
    return GroupResult("profiles", ok, f"closed-form err {err:.2e}, a(m) err {a_err:.2e}, M={p.M:.12g}")


def group_hardy(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    n = sz.n_pencil * 4
    coarse = smallest_eigenpair(hardy_pencil(make_grid(n))).lambda1
    fine = smallest_eigenpair(hardy_pencil(make_grid(2 * n))).lambda1
    ok = 0.25 < fine < coarse
    return GroupResult("hardy", ok, f"lambda_1(n={n})={coarse:.6f}, lambda_1(2n)={fine:.6f} (limit 1/4)")


def group_spectral_sign(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    n = sz.n_pencil
    worst, gap_min, notes = math.inf, math.inf, []
    ok = True
    for N in (2, 3, 4):
        p = lab.profile(N)
        A_eff = solve_a_of_m(p, 0.9 * p.M)
        for frac in (0.25, 0.5, 0.75, 0.9):
            a = frac * A_eff
            pencil = assemble(make_grid(n), a, p)
            if inject == "pencil-sign":
                pencil = replace(pencil, k_diag=-pencil.k_diag, k_off=-pencil.k_off)
            try:
                res = lambda1(a, make_grid(n), p) if inject is None else smallest_eigenpair(pencil)
                lam, gap = res.lambda1, (res.refinement_gap if inject is None else 0.0)
                second = lambda2(pencil, res)
                second_fine = lambda2(assemble(make_grid(2 * n), a, p),
                                      lambda1(a, make_grid(2 * n), p, refine=False))
                spread = min(second - lam, second_fine - lam)
            except LinearAlgebraError:
                lam, gap, spread = float(dense_eigenvalues(pencil, 1)[0]), 0.0, 0.0
            worst = min(worst, lam - 1.0 - gap)
            gap_min = min(gap_min, spread)
            if lam <= 1.0 + gap or spread <= 0:
                ok = False
                notes.append(f"N={N} a={a:.4g}: lambda_1={lam:.8g} <= 1 + gap {gap:.2e}" if lam <= 1.0 + gap
                             else f"N={N} a={a:.4g}: no spectral gap")
    detail = f"min(lambda_1 - 1 - gap)={worst:.4g}, min(lambda_2 - lambda_1)={gap_min:.4g}"
    return GroupResult("spectral-sign", ok, "; ".join([detail] + notes))


def _identity_group(name: str, fn, lab: _Lab, sz: Sizes, tol: float) -> GroupResult:
    rng = np.random.default_rng(7)
    tests = _smooth_tests(rng, sz.smooth_h)
    worst, not_shrinking = 0.0, 0
    for N in (2, 3):
        p = lab.profile(N)
        a = 0.5 * effective_A(p)
        for f in tests:
            r_fine = fn(GridFn.sample(make_grid(sz.n_beesack), f), a, p)
            r_coarse = fn(GridFn.sample(make_grid(sz.n_beesack // 2), f), a, p)
            worst = max(worst, r_fine)
            if r_fine > r_coarse and r_fine > 1e-12:
                not_shrinking += 1
    ok = worst <= tol and not_shrinking == 0
    return GroupResult(name, ok, f"max residual {worst:.3e} (tol {tol:g}), non-decreasing under refinement: {not_shrinking}")


def group_beesack(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    return _identity_group("beesack", beesack_residual, lab, sz, 1e-5)


def group_parts_identity(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    return _identity_group("parts-identity", parts_identity_residual, lab, sz, 1e-5 if sz.n_beesack >= 4096 else 1e-4)


def group_fixed_point(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    grid = make_grid(sz.n_evolve)
    notes, ok = [], True
    for N in (2, 3):
        p = lab.profile(N)
        params = ModelParams(N, 0.5 * p.M)
        a = solve_a_of_m(p, params.m)
        u0 = GridFn(grid, sample_steady(p, a, grid.nodes))
        ref = discrete_steady_state(grid, params, p)
        gap = float(np.max(np.abs(u0.values - ref.values)))
        traj = run(u0, params, EvolveConfig(dt=sz.dt, t_end=sz.t_fixed, dense_until=0.0))
        drift = float(np.max(np.abs(traj.states[-1] - u0.values)))
        tol = sz.fixed_point_tol if sz.fixed_point_tol is not None else 3.0 * gap + 1e-8
        ok &= drift <= tol
        notes.append(f"N={N}: drift {drift:.2e} (tol {tol:.2e}, U_a vs discrete fixed point {gap:.2e})")
    return GroupResult("fixed-point", ok, "; ".join(notes))


def _pair_excess(lo: GridFn, hi: GridFn, params: ModelParams, dt: float, t_end: float, leak: float) -> float:
    grid = lo.grid
    i_lo = x_integrator(grid, params, "imex", True)
    i_hi = x_integrator(grid, params, "imex", True)
    if leak:
        i_lo.pinned[grid.n] = params.m + leak
    v_lo, v_hi = lo.values.copy(), hi.values.copy()
    worst = float(np.max(v_lo - v_hi))
    steps = int(round(t_end / dt))
    for k in range(steps):
        v_lo = i_lo.advance(v_lo, k * dt, dt)
        v_hi = i_hi.advance(v_hi, k * dt, dt)
        worst = max(worst, float(np.max(v_lo - v_hi)))
    return worst


def group_comparison(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    rng = np.random.default_rng(11)
    grid = make_grid(sz.n_evolve)
    worst = -math.inf
    for k in range(sz.pairs):
        N = 2 if k % 2 == 0 else 3
        p = lab.profile(N)
        params = ModelParams(N, 1.0 if N == 2 else 0.5 * p.M)
        lo, hi = ordered_pair(grid, params.m, rng)
        leak = 0.1 * params.m if inject == "boundary-leak" else 0.0
        worst = max(worst, _pair_excess(lo, hi, params, sz.dt, sz.t_compare, leak))
    ok = worst <= 1e-8
    return GroupResult("comparison", ok, f"max(u_lo - u_hi) = {worst:.3e} over {sz.pairs} pairs")


def group_lyapunov(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    grid = make_grid(sz.n_evolve)
    notes, ok = [], True
    for N in (2, 3):
        p = lab.profile(N)
        params = ModelParams(N, 1.0 if N == 2 else 0.5 * p.M)
        traj = run(GridFn(grid, params.m * grid.nodes), params, EvolveConfig(dt=sz.dt, t_end=3.0))
        values = np.array([d.lyapunov for d in traj.diagnostics])
        mono = is_nonincreasing(values)
        ok &= mono
        notes.append(f"N={N}: nonincreasing={mono}, drop {values[0] - values[-1]:.4g}")
    return GroupResult("lyapunov", ok, "; ".join(notes))


def group_dissipation_order(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    grid = make_grid(sz.n_evolve)
    params = ModelParams(2, 1.0)
    means = []
    for dt in (sz.dt, sz.dt / 2):
        traj = run(GridFn(grid, grid.nodes), params, EvolveConfig(dt=dt, t_end=1.0, dense_until=1.0))
        means.append(float(np.mean(dissipation_residual(traj)[len(traj.times) // 2:])))
    ok = means[1] < means[0]
    return GroupResult("dissipation-order", ok, f"mean residual {means[0]:.3e} -> {means[1]:.3e} under dt halving",
                       warning_only=True)


def group_cross_solver(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    grid = make_grid(sz.n_evolve)
    notes, ok = [], True
    for N in (2, 3):
        p = lab.profile(N)
        params = ModelParams(N, 1.0 if N == 2 else 0.5 * p.M)
        u0 = GridFn(grid, params.m * grid.nodes)
        cfg = EvolveConfig(dt=sz.dt, t_end=sz.t_compare, dense_until=0.0, snapshot_growth=2.0)
        ux = run(u0, params, cfg).states[-1]
        uw = run(u0, params, replace(cfg, solver="w")).states[-1]
        diff = float(np.max(np.abs(ux - uw)))
        ok &= diff <= sz.cross_tol
        notes.append(f"N={N}: max |u_x-solver - u_w-solver| = {diff:.2e}")
    return GroupResult("cross-solver", ok, "; ".join(notes) + f" (tol {sz.cross_tol:g})")


def group_rate(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    grid = make_grid(sz.n_evolve)
    notes, ok = [], True
    for N in (2, 3):
        p = lab.profile(N)
        params = ModelParams(N, 1.0 if N == 2 else 0.5 * p.M)
        a = solve_a_of_m(p, params.m)
        ref = discrete_steady_state(grid, params, p)
        traj = run(GridFn(grid, params.m * grid.nodes), params, EvolveConfig(dt=sz.dt, t_end=sz.t_rate))
        series = norm_series(traj, ref)
        spectral = lambda1(a, grid, p, refine=False)
        bound = theoretical_rate(a, 0.9, spectral, p)
        fitL = fit_rate(series, "L", comparator=bound)
        fitC1 = fit_rate(series, "C1", comparator=bound)
        consistent = rate_consistency(fitL, fitC1).passed
        smooth = smoothing_check(traj, 1.0, p, a, reference=ref)
        good = fitL.slope >= bound - fitL.stderr and consistent
        ok &= good
        notes.append(f"N={N}: slope_L={fitL.slope:.5g} slope_C1={fitC1.slope:.5g} bound={bound:.5g} "
                     f"r2={fitL.r_squared:.6f} smoothing max={smooth.bound:.3g}")
    return GroupResult("rate", ok, "; ".join(notes))


def group_supercritical(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    p = lab.profile(3)
    factor = 1.05 if sz is FULL else 1.3
    params = ModelParams(3, factor * p.M)
    grid = make_grid(max(256, sz.n_evolve))
    traj = run(GridFn(grid, params.m * grid.nodes), params,
               EvolveConfig(dt=sz.dt, t_end=20.0, dense_until=0.0, blowup_ratio=100.0 if sz is QUICK else 1e3))
    ok = traj.status == "supercritical-detected"
    return GroupResult("supercritical", ok, f"m={factor}M: status {traj.status} at t={traj.times[-1]:.4g}")


def group_trend(lab: _Lab, sz: Sizes, inject: Optional[str]) -> GroupResult:
    p = lab.profile(3)
    grid = make_grid(4 * sz.n_pencil, 2.0)
    fracs = np.arange(0.1, 0.951, 0.05) if sz is FULL else np.array([0.1, 0.3, 0.5, 0.7, 0.9, 0.95])
    lams = [lambda1(f * p.A, grid, p, refine=False).lambda1 for f in fracs]
    decreasing = all(x > y for x, y in zip(lams[:-1], lams[1:]))
    ok = decreasing and lams[-1] < 1.1
    return GroupResult("lambda1-trend", ok, f"lambda_1 from {lams[0]:.5g} to {lams[-1]:.5g}, decreasing={decreasing}",
                       warning_only=True)


GROUPS: Dict[str, Callable[[_Lab, Sizes, Optional[str]], GroupResult]] = {
    "profiles": group_profiles,
    "hardy": group_hardy,
    "spectral-sign": group_spectral_sign,
    "beesack": group_beesack,
    "parts-identity": group_parts_identity,
    "fixed-point": group_fixed_point,
    "comparison": group_comparison,
    "lyapunov": group_lyapunov,
    "dissipation-order": group_dissipation_order,
    "cross-solver": group_cross_solver,
    "rate": group_rate,
    "supercritical": group_supercritical,
    "lambda1-trend": group_trend,
}


def cmd_validate(full: bool = False, only: Optional[List[str]] = None,
                 inject: Optional[str] = None) -> List[GroupResult]:
    sz = FULL if full else QUICK
    lab = _Lab()
    results: List[GroupResult] = []
    for name, fn in GROUPS.items():
        if only and name not in only:
            continue
        started = time.monotonic()
        try:
            res = fn(lab, sz, inject)
        except ChemLabError as e:
            res = GroupResult(name, False, f"{type(e).__name__}: {e}")
        res.seconds = time.monotonic() - started
        level = "PASS" if res.passed else ("WARN" if res.warning_only else "FAIL")
        log.info("[%s] %s (%.1fs): %s", level, name, res.seconds, res.detail)
        results.append(res)
    return results


def failed(results: List[GroupResult]) -> List[GroupResult]:
    return [r for r in results if not r.passed and not r.warning_only]
