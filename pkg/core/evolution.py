# core/evolution.py
"""
Time integration of

    u_t = x^(2-q) u_xx + u u_x^q,   u(t,0) = 0, u(t,1) = m,   q = 2/N

on a nodal grid (the "x-solver"), and of the equivalent radial problem in the
unit ball of R^(N+2),

    w_t = w_rr + (N+1)/r w_r + N^2 w (w + r w_r / N)^q,   w(t,1) = m,

(the "w-solver"), linked by u(t,x) = x w(t/N^2, x^(1/N)).

Both use IMEX Euler: the (degenerate) diffusion is implicit, the nonlinearity
explicit with u_x from second-order differences and clamped at 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded
from scipy.sparse import diags
from scipy.sparse.linalg import factorized

from core.errors import (
    ConfigError,
    InstabilityError,
    LinearAlgebraError,
    MembershipError,
    NonpositiveSlopeError,
)
from core.functionals import dissipation, lyapunov
from core.logger import get_logger
from core.profiles import ModelParams, SteadyProfile, sample_steady, solve_a_of_m
from core.weighted_norms import Grid, GridFn, make_grid

log = get_logger(__name__)

SCHEMES = ("imex", "explicit")
SOLVERS = ("x", "w")
MEMBERSHIP_TOL = 1e-12


# ---------------- States / configuration ----------------
@dataclass(frozen=True)
class PdeState:
    params: ModelParams
    t: float
    u: GridFn


@dataclass(frozen=True)
class RadialState:
    params: ModelParams
    t: float          # w-time, t_u / N^2
    w: GridFn         # on a grid of r in [0, 1]


@dataclass(frozen=True)
class EvolveConfig:
    dt: float = 1e-4
    t_end: float = 1.0
    scheme: str = "imex"
    solver: str = "x"
    snapshot_every: int = 10       # steps between snapshots while t <= dense_until
    dense_until: float = 1.5
    snapshot_growth: float = 1.05  # geometric spacing afterwards
    mono_tol: float = 1e-8
    clamp_slopes: bool = True
    max_halvings: int = 10
    blowup_ratio: float = 1e3

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")
        if self.snapshot_growth <= 1.0:
            raise ConfigError("snapshot_growth must be > 1")
        if self.max_halvings < 0:
            raise ConfigError("max_halvings must be >= 0")


@dataclass(frozen=True)
class SnapshotDiagnostics:
    t: float
    min_ux: float
    sup_ratio: float
    left_residual: float
    right_residual: float
    lyapunov: float
    dissipation: float


@dataclass
class Trajectory:
    params: ModelParams
    grid: Grid
    cfg: EvolveConfig
    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    diagnostics: List[SnapshotDiagnostics] = field(default_factory=list)
    status: str = "completed"   # completed | supercritical-detected | unstable

    def state(self, k: int) -> GridFn:
        return GridFn(self.grid, self.states[k])

    def nearest(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))

    @property
    def final(self) -> PdeState:
        return PdeState(self.params, self.times[-1], self.state(-1))


# ---------------- Membership of Y_m ----------------
def validate_initial(u0: GridFn, params: ModelParams) -> PdeState:
    """Accept u0 iff u0(0) = 0, u0(1) = m and u0 is nondecreasing; errors list every violated clause."""
    v = u0.values
    m = params.m
    violated = []
    if not np.all(np.isfinite(v)):
        violated.append("finite")
    if abs(v[0]) > MEMBERSHIP_TOL:
        violated.append("origin")
    if abs(v[-1] - m) > MEMBERSHIP_TOL * max(1.0, m):
        violated.append("boundary")
    slopes = u0.slopes
    if np.any(slopes < -MEMBERSHIP_TOL):
        violated.append("monotone")
    if violated:
        detail = f"u0(0)={v[0]:.3e}, u0(1)={v[-1]:.6g} (m={m:.6g}), min slope={float(np.min(slopes)):.3e}"
        raise MembershipError(",".join(violated), detail)
    pinned = v.copy()
    pinned[0], pinned[-1] = 0.0, m
    return PdeState(params, 0.0, GridFn(u0.grid, pinned))


# ---------------- Discrete operators ----------------
@dataclass(frozen=True, eq=False)
class Tridiag:
    """Row-wise tridiagonal operator; lower[i], upper[i] multiply v[i-1], v[i+1]."""
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.lower[1:] * v[:-1]
        out[:-1] += self.upper[:-1] * v[1:]
        return out

    def banded(self, shift: float = 0.0, scale: float = 1.0) -> np.ndarray:
        """(shift*I + scale*T) in solve_banded layout."""
        ab = np.zeros((3, self.diag.size))
        ab[0, 1:] = scale * self.upper[:-1]
        ab[1, :] = shift + scale * self.diag
        ab[2, :-1] = scale * self.lower[1:]
        return ab

    def implicit_solver(self, dt: float) -> Callable[[np.ndarray], np.ndarray]:
        mat = diags([-dt * self.lower[1:], 1.0 - dt * self.diag, -dt * self.upper[:-1]], [-1, 0, 1], format="csc")
        try:
            return factorized(mat)
        except RuntimeError as e:
            raise LinearAlgebraError(f"factorization of I - dt*L failed (dt={dt:g}): {e}") from e


def _interior_spacing(nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return nodes[1:-1] - nodes[:-2], nodes[2:] - nodes[1:-1]


def gradient_stencil(nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interior coefficients of the second-order centred derivative (as np.gradient uses)."""
    hs, hd = _interior_spacing(nodes)
    return -hd / (hs * (hs + hd)), (hd - hs) / (hs * hd), hs / (hd * (hs + hd))


def diffusion_operator(grid: Grid, q: float) -> Tridiag:
    """x^(2-q) u_xx on interior nodes, zero rows at both Dirichlet ends."""
    x = grid.nodes
    hs, hd = _interior_spacing(x)
    d = x[1:-1] ** (2.0 - q)
    lower, diag, upper = np.zeros_like(x), np.zeros_like(x), np.zeros_like(x)
    lower[1:-1] = 2.0 * d / (hs * (hs + hd))
    diag[1:-1] = -2.0 * d / (hs * hd)
    upper[1:-1] = 2.0 * d / (hd * (hs + hd))
    return Tridiag(lower, diag, upper)


def radial_laplacian(grid: Grid, N: int) -> Tridiag:
    """Radial Laplacian in R^(N+2); symmetric origin row, zero row at r = 1."""
    r = grid.nodes
    hs, hd = _interior_spacing(r)
    gl, gc, gu = gradient_stencil(r)
    k = (N + 1) / r[1:-1]
    lower, diag, upper = np.zeros_like(r), np.zeros_like(r), np.zeros_like(r)
    lower[1:-1] = 2.0 / (hs * (hs + hd)) + k * gl
    diag[1:-1] = -2.0 / (hs * hd) + k * gc
    upper[1:-1] = 2.0 / (hd * (hs + hd)) + k * gu
    c0 = 2.0 * (N + 2) / r[1] ** 2
    diag[0], upper[0] = -c0, c0
    return Tridiag(lower, diag, upper)


def _clamped_power(base: np.ndarray, q: float, clamp: bool) -> np.ndarray:
    if clamp:
        base = np.maximum(base, 0.0)
    with np.errstate(invalid="ignore"):
        return base ** q


def reaction_x(u: np.ndarray, nodes: np.ndarray, q: float, clamp: bool = True) -> np.ndarray:
    ux = np.gradient(u, nodes, edge_order=2)
    out = u * _clamped_power(ux, q, clamp)
    out[0] = out[-1] = 0.0
    return out


def reaction_w(w: np.ndarray, r: np.ndarray, N: int, clamp: bool = True) -> np.ndarray:
    wr = np.gradient(w, r, edge_order=2)
    wr[0] = 0.0
    out = N * N * w * _clamped_power(w + r * wr / N, 2.0 / N, clamp)
    out[-1] = 0.0
    return out


def semidiscrete_rhs(s: PdeState) -> GridFn:
    """x^(2-q) D2 u + u (Du)^q at interior nodes, 0 at the ends."""
    q = s.params.q
    op = diffusion_operator(s.u.grid, q)
    v = s.u.values
    return GridFn(s.u.grid, op.apply(v) + reaction_x(v, s.u.grid.nodes, q))


class Integrator:
    """One-step map for either solver; caches the implicit factorization per dt."""

    def __init__(self, op: Tridiag, reaction: Callable[[np.ndarray], np.ndarray],
                 pinned: Dict[int, float], scheme: str):
        self.op = op
        self.reaction = reaction
        self.pinned = pinned
        self.scheme = scheme
        self._solvers: Dict[float, Callable[[np.ndarray], np.ndarray]] = {}

    def _solver(self, dt: float) -> Callable[[np.ndarray], np.ndarray]:
        if dt not in self._solvers:
            if len(self._solvers) > 8:
                self._solvers.clear()
            self._solvers[dt] = self.op.implicit_solver(dt)
        return self._solvers[dt]

    def advance(self, v: np.ndarray, t: float, dt: float) -> np.ndarray:
        f = self.reaction(v)
        if self.scheme == "imex":
            rhs = v + dt * f
            for i, val in self.pinned.items():
                rhs[i] = val
            out = np.asarray(self._solver(dt)(rhs), dtype=float)
        else:
            out = v + dt * (self.op.apply(v) + f)
        for i, val in self.pinned.items():
            out[i] = val
        if not np.all(np.isfinite(out)):
            raise InstabilityError(t + dt, float(np.nanmin(out)) if np.any(np.isfinite(out)) else math.nan,
                                   float(np.nanmax(out)) if np.any(np.isfinite(out)) else math.nan)
        return out

    def advance_with_retries(self, v: np.ndarray, t: float, dt: float, max_halvings: int) -> np.ndarray:
        """Advance by dt; on failure retry with 2, 4, ... substeps, at most max_halvings times."""
        last_exc: Optional[Exception] = None
        for attempt in range(max_halvings + 1):
            k = 2 ** attempt
            sub = dt / k
            try:
                out = v
                for j in range(k):
                    out = self.advance(out, t + j * sub, sub)
                if attempt:
                    log.warning("step at t=%.6g recovered with dt/%d", t, k)
                return out
            except (InstabilityError, LinearAlgebraError) as e:
                last_exc = e
                log.debug("step at t=%.6g failed with dt=%.3e: %s", t, sub, e)
        raise last_exc


def x_integrator(grid: Grid, params: ModelParams, scheme: str, clamp: bool) -> Integrator:
    q = params.q
    nodes = grid.nodes
    return Integrator(diffusion_operator(grid, q), lambda v: reaction_x(v, nodes, q, clamp),
                       {0: 0.0, grid.n: params.m}, scheme)


def w_integrator(grid: Grid, params: ModelParams, scheme: str, clamp: bool) -> Integrator:
    r = grid.nodes
    N = params.N
    return Integrator(radial_laplacian(grid, N), lambda v: reaction_w(v, r, N, clamp),
                       {grid.n: params.m}, scheme)


# ---------------- Single steps ----------------
def step_x(s: PdeState, dt: float, scheme: str = "imex", clamp: bool = True) -> PdeState:
    integ = x_integrator(s.u.grid, s.params, scheme, clamp)
    return PdeState(s.params, s.t + dt, GridFn(s.u.grid, integ.advance(s.u.values, s.t, dt)))


def step_w(s: RadialState, dt: float, scheme: str = "imex", clamp: bool = True) -> RadialState:
    """One step in w-time (dt_w = dt_u / N^2)."""
    integ = w_integrator(s.w.grid, s.params, scheme, clamp)
    return RadialState(s.params, s.t + dt, GridFn(s.w.grid, integ.advance(s.w.values, s.t, dt)))


# ---------------- Coordinate maps ----------------
def map_u_to_w(s: PdeState, r_grid: Optional[Grid] = None) -> RadialState:
    """w(r) = u(r^N)/r^N; below x_1 the P1 interpolant gives w = u_1/x_1, which is also w(0)."""
    N = s.params.N
    x, u = s.u.grid.nodes, s.u.values
    r_grid = r_grid or make_grid(s.u.grid.n)
    r = r_grid.nodes
    xs = r ** N
    w = np.full_like(r, u[1] / x[1])
    far = xs >= x[1]
    w[far] = PchipInterpolator(x, u)(xs[far]) / xs[far]
    w[-1] = s.params.m
    return RadialState(s.params, s.t / N ** 2, GridFn(r_grid, w))


def map_w_to_u(s: RadialState, x_grid: Optional[Grid] = None) -> PdeState:
    N = s.params.N
    x_grid = x_grid or make_grid(s.w.grid.n)
    x = x_grid.nodes
    u = x * PchipInterpolator(s.w.grid.nodes, s.w.values)(x ** (1.0 / N))
    u[0], u[-1] = 0.0, s.params.m
    return PdeState(s.params, s.t * N ** 2, GridFn(x_grid, u))


# ---------------- Driver ----------------
Hook = Callable[[float, GridFn, SnapshotDiagnostics], None]


def _diagnose(t: float, u: GridFn, u_t: GridFn, params: ModelParams) -> SnapshotDiagnostics:
    v, x = u.values, u.grid.nodes
    try:
        lyap = lyapunov(u, params)
        diss = dissipation(u, u_t, params)
    except NonpositiveSlopeError as e:
        log.warning("t=%.6g: Lyapunov value undefined (%s)", t, e)
        lyap = diss = math.nan
    return SnapshotDiagnostics(
        t=t,
        min_ux=float(np.min(u.slopes)),
        sup_ratio=float(np.max(v[1:] / x[1:])),
        left_residual=abs(float(v[0])),
        right_residual=abs(float(v[-1]) - params.m),
        lyapunov=lyap,
        dissipation=diss,
    )


def run(u0: GridFn, params: ModelParams, cfg: EvolveConfig,
        hooks: Sequence[Hook] = ()) -> Trajectory:
    """
    Evolve u0 to cfg.t_end and collect snapshots: every cfg.snapshot_every steps
    up to cfg.dense_until, then whenever t has grown by cfg.snapshot_growth, and
    the final state. Stops early with status "supercritical-detected" once
    sup u/x exceeds cfg.blowup_ratio. Unrecoverable instability re-raises
    InstabilityError with the partial trajectory attached.
    """
    s0 = validate_initial(u0, params)
    grid = s0.u.grid
    N = params.N
    traj = Trajectory(params, grid, cfg)

    if cfg.solver == "x":
        integ = x_integrator(grid, params, cfg.scheme, cfg.clamp_slopes)
        v = s0.u.values.copy()
        to_u: Callable[[np.ndarray], np.ndarray] = lambda arr: arr
        sup_of = lambda arr: float(np.max(arr[1:] / grid.nodes[1:]))
        time_scale = 1.0
    else:
        r_grid = make_grid(grid.n)
        integ = w_integrator(r_grid, params, cfg.scheme, cfg.clamp_slopes)
        v = map_u_to_w(s0, r_grid).w.values.copy()
        to_u = lambda arr: map_w_to_u(RadialState(params, 0.0, GridFn(r_grid, arr)), grid).u.values
        sup_of = lambda arr: float(np.max(arr))
        time_scale = 1.0 / N ** 2

    def snapshot(t: float, cur: np.ndarray, u_t: np.ndarray) -> SnapshotDiagnostics:
        u = GridFn(grid, to_u(cur))
        d = _diagnose(t, u, GridFn(grid, u_t), params)
        traj.times.append(t)
        traj.states.append(u.values.copy())
        traj.diagnostics.append(d)
        if d.min_ux < -cfg.mono_tol:
            log.debug("t=%.6g: min slope %.3e below -mono_tol", t, d.min_ux)
        for hook in hooks:
            hook(t, u, d)
        return d

    snapshot(0.0, v, semidiscrete_rhs(s0).values)
    n_steps = int(math.ceil(cfg.t_end / cfg.dt - 1e-9))
    t, last_snap = 0.0, 0.0
    log.debug("run N=%d m=%g n=%d dt=%g steps=%d solver=%s", N, params.m, grid.n, cfg.dt, n_steps, cfg.solver)

    for k in range(1, n_steps + 1):
        t_next = min(k * cfg.dt, cfg.t_end)
        h = t_next - t
        prev = v
        try:
            v = integ.advance_with_retries(v, t * time_scale, h * time_scale, cfg.max_halvings)
        except InstabilityError as e:
            traj.status = "unstable"
            e.trajectory = traj
            log.error("run unstable at t=%.6g: %s", t, e)
            raise
        t = t_next

        blowup = sup_of(v) > cfg.blowup_ratio
        if t <= cfg.dense_until + 1e-12:
            due = k % cfg.snapshot_every == 0
        else:
            due = t >= last_snap * cfg.snapshot_growth
        if due or blowup or k == n_steps:
            u_t = (to_u(v) - to_u(prev)) / h
            snapshot(t, v, u_t)
            last_snap = t
        if blowup:
            traj.status = "supercritical-detected"
            log.warning("sup u/x exceeded %.3g at t=%.6g: supercritical", cfg.blowup_ratio, t)
            break
    return traj


# ---------------- Discrete steady state ----------------
def discrete_steady_state(grid: Grid, params: ModelParams, profile: SteadyProfile,
                          tol: float = 1e-13, max_iter: int = 40) -> GridFn:
    """Newton polish of U_a samples to the fixed point of the x-scheme on `grid`."""
    if params.m == 0:
        return GridFn.zeros(grid)
    q = params.q
    x = grid.nodes
    a = solve_a_of_m(profile, params.m)
    u = sample_steady(profile, a, x)
    op = diffusion_operator(grid, q)
    gl, gc, gu = gradient_stencil(x)

    for it in range(max_iter):
        g = np.gradient(u, x, edge_order=2)[1:-1]
        g = np.maximum(g, 1e-300)
        resid = op.apply(u)[1:-1] + u[1:-1] * g ** q
        jac = op.banded()[:, 1:-1].copy()
        c = q * u[1:-1] * g ** (q - 1.0)
        jac[1, :] += g ** q + c * gc
        jac[0, 1:] += (c * gu)[:-1]
        jac[2, :-1] += (c * gl)[1:]
        try:
            delta = solve_banded((1, 1), jac, -resid)
        except (ValueError, np.linalg.LinAlgError) as e:
            raise LinearAlgebraError(f"Newton step {it} failed: {e}") from e
        u[1:-1] += delta
        if np.max(np.abs(delta)) < tol:
            log.debug("discrete steady state: %d Newton steps, gap to U_a %.3e",
                      it + 1, float(np.max(np.abs(u - sample_steady(profile, a, x)))))
            return GridFn(grid, u)
    raise LinearAlgebraError(f"Newton for the discrete steady state did not converge in {max_iter} steps")


# ---------------- Derived quantities ----------------
def cell_density(s: PdeState) -> Tuple[np.ndarray, np.ndarray]:
    """Radial cell density of the chemotaxis system, rho(r) = N^N u_x(r^N), at r = x^(1/N)."""
    N = s.params.N
    x = s.u.grid.nodes
    ux = np.gradient(s.u.values, x, edge_order=2)
    return x ** (1.0 / N), N ** N * ux


# ---------------- Initial data ----------------
def initial_family(spec: str, grid: Grid, params: ModelParams,
                   profile: Optional[SteadyProfile] = None,
                   rng: Optional[np.random.Generator] = None) -> GridFn:
    """linear | power:<p> | steady-perturbed:<eps> | random[:<terms>] (needs rng)"""
    x = grid.nodes
    m = params.m
    name, _, arg = spec.partition(":")
    try:
        if name == "linear":
            return GridFn(grid, m * x)
        if name == "power":
            p = float(arg)
            if p <= 0:
                raise ConfigError(f"power exponent must be > 0, got {p}")
            return GridFn(grid, m * x ** p)
        if name == "steady-perturbed":
            if profile is None:
                raise ConfigError("steady-perturbed initial data needs a profile")
            eps = float(arg) if arg else 0.0
            a = solve_a_of_m(profile, m)
            return GridFn(grid, sample_steady(profile, a, x) + eps * m * x * (1.0 - x))
        if name == "random":
            if rng is None:
                raise ConfigError("random initial data needs a seeded generator")
            terms = int(arg) if arg else 3
            if terms < 1:
                raise ConfigError(f"random initial data needs >= 1 term, got {terms}")
            return random_initial(grid, m, rng, terms)
    except ValueError as e:
        raise ConfigError(f"bad initial data spec {spec!r}: {e}") from e
    raise ConfigError(f"unknown initial data family {spec!r}")


def random_initial(grid: Grid, m: float, rng: np.random.Generator, terms: int = 3) -> GridFn:
    """m * sum_j c_j x^(p_j) with p_j in [1, 2.5] and Dirichlet weights c_j."""
    x = grid.nodes
    p = rng.uniform(1.0, 2.5, terms)
    c = rng.dirichlet(np.ones(terms))
    values = m * np.sum(c[:, None] * x[None, :] ** p[:, None], axis=0)
    values[0], values[-1] = 0.0, m
    return GridFn(grid, values)


def ordered_pair(grid: Grid, m: float, rng: np.random.Generator) -> Tuple[GridFn, GridFn]:
    """Two members of Y_m with lo < hi strictly inside (0, 1)."""
    lo = random_initial(grid, m, rng)
    x = grid.nodes
    delta = rng.uniform(0.05, 0.5)
    return lo, GridFn(grid, lo.values + delta * m * x * (1.0 - x))
