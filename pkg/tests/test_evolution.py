# tests/test_evolution.py
import numpy as np
import pytest

from core.errors import ConfigError, InstabilityError, MembershipError
from core.evolution import (
    EvolveConfig,
    Integrator,
    PdeState,
    RadialState,
    cell_density,
    diffusion_operator,
    discrete_steady_state,
    initial_family,
    map_u_to_w,
    map_w_to_u,
    ordered_pair,
    radial_laplacian,
    run,
    step_w,
    step_x,
    validate_initial,
    x_integrator,
)
from core.profiles import ModelParams, sample_steady, solve_a_of_m
from core.weighted_norms import GridFn, make_grid


def test_membership_lists_every_violated_clause():
    g = make_grid(16)
    with pytest.raises(MembershipError) as info:
        validate_initial(GridFn.sample(g, lambda x: -x), ModelParams(2, 1.0))
    assert info.value.clause == "boundary,monotone"


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        EvolveConfig(dt=0.0)
    with pytest.raises(ConfigError):
        EvolveConfig(scheme="rk4")
    with pytest.raises(ConfigError):
        EvolveConfig(snapshot_growth=1.0)


@pytest.mark.parametrize("grading", [1.0, 2.0])
def test_diffusion_annihilates_linear_functions(grading):
    g = make_grid(32, grading)
    op = diffusion_operator(g, 2 / 3)
    assert np.allclose(op.apply(3.0 * g.nodes), 0.0, atol=1e-8)


@pytest.mark.parametrize("N", [2, 3])
def test_radial_laplacian_of_r_squared(N):
    g = make_grid(32, 1.5)
    lap = radial_laplacian(g, N).apply(g.nodes ** 2)
    assert np.allclose(lap[:-1], 2.0 * (N + 2), rtol=1e-9)
    assert lap[-1] == 0.0
    assert np.allclose(radial_laplacian(g, N).apply(np.ones(33)), 0.0, atol=1e-9)


def test_zero_mass_stays_zero():
    g = make_grid(32)
    traj = run(GridFn.zeros(g), ModelParams(3, 0.0), EvolveConfig(dt=1e-2, t_end=0.2))
    assert traj.status == "completed"
    assert all(not np.any(s) for s in traj.states)
    assert all(d.lyapunov == 0.0 for d in traj.diagnostics)


def test_run_keeps_boundary_values_and_monotonicity():
    g = make_grid(64)
    params = ModelParams(2, 1.0)
    traj = run(GridFn.sample(g, lambda x: x ** 2), params, EvolveConfig(dt=1e-3, t_end=0.3))
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(0.3)
    for d in traj.diagnostics:
        assert d.left_residual == 0.0
        assert d.right_residual == 0.0
        assert d.min_ux >= -1e-8
    assert traj.final.u.values[-1] == 1.0


def test_step_pins_boundaries():
    g = make_grid(32)
    s = PdeState(ModelParams(2, 1.5), 0.0, GridFn.sample(g, lambda x: 1.5 * x))
    nxt = step_x(s, 1e-3)
    assert nxt.t == pytest.approx(1e-3)
    assert nxt.u.values[0] == 0.0
    assert nxt.u.values[-1] == 1.5


def test_discrete_steady_state_is_a_fixed_point(profile3):
    g = make_grid(128)
    params = ModelParams(3, 0.5 * profile3.M)
    ref = discrete_steady_state(g, params, profile3)
    after = step_x(PdeState(params, 0.0, ref), 1e-2)
    assert np.max(np.abs(after.u.values - ref.values)) < 1e-10

    a = solve_a_of_m(profile3, params.m)
    assert np.max(np.abs(ref.values - sample_steady(profile3, a, g.nodes))) < 1e-2


def test_discrete_steady_state_for_zero_mass(profile2):
    g = make_grid(16)
    assert not np.any(discrete_steady_state(g, ModelParams(2, 0.0), profile2).values)


def test_retry_halves_the_step():
    g = make_grid(16)
    calls = {"n": 0}

    def flaky(v):
        calls["n"] += 1
        return np.full_like(v, np.nan) if calls["n"] <= 2 else np.zeros_like(v)

    integ = Integrator(diffusion_operator(g, 1.0), flaky, {0: 0.0, g.n: 1.0}, "imex")
    out = integ.advance_with_retries(g.nodes.copy(), 0.0, 1e-2, max_halvings=3)
    assert np.all(np.isfinite(out))
    assert calls["n"] == 6

    calls["n"] = -10
    with pytest.raises(InstabilityError):
        integ.advance_with_retries(g.nodes.copy(), 0.0, 1e-2, max_halvings=1)


def test_coordinate_maps_on_linear_data():
    g = make_grid(64)
    params = ModelParams(3, 0.8)
    s = PdeState(params, 0.9, GridFn(g, 0.8 * g.nodes))
    w = map_u_to_w(s)
    assert w.t == pytest.approx(0.1)
    assert np.allclose(w.w.values, 0.8, atol=1e-12)
    back = map_w_to_u(RadialState(params, w.t, w.w), g)
    assert back.t == pytest.approx(0.9)
    assert np.allclose(back.u.values, 0.8 * g.nodes, atol=1e-12)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_radial_origin_row(N):
    g = make_grid(32, 1.5)
    op = radial_laplacian(g, N)
    c0 = 2.0 * (N + 2) / g.nodes[1] ** 2
    assert op.diag[0] == pytest.approx(-c0)
    assert op.upper[0] == pytest.approx(c0)


def test_w_step_matches_x_step():
    g = make_grid(64)
    params = ModelParams(2, 1.0)
    dt = 1e-3
    s = PdeState(params, 0.0, GridFn(g, g.nodes.copy()))
    ux = step_x(s, dt)
    w1 = step_w(map_u_to_w(s), dt / params.N ** 2)
    uw = map_w_to_u(w1, g)
    assert uw.t == pytest.approx(ux.t)
    assert w1.w.values[-1] == params.m
    inner = g.nodes <= 0.5
    expected = (1.0 + dt) * g.nodes[inner]
    assert np.allclose(ux.u.values[inner], expected, atol=1e-7)
    assert np.allclose(uw.u.values[inner], expected, atol=1e-7)
    assert np.max(np.abs(uw.u.values - ux.u.values)) <= 2 * dt


def test_w_steps_stay_below_supersolution_bound():
    # w0 = m = 1 with N = 2 stays below K / (1 - m/2) = 2
    g = make_grid(32)
    params = ModelParams(2, 1.0)
    s = RadialState(params, 0.0, GridFn(g, np.ones(33)))
    for _ in range(100):
        s = step_w(s, 2.5e-3)
    assert s.t == pytest.approx(0.25)
    assert s.w.values[-1] == 1.0
    assert np.min(s.w.values) >= 1.0 - 1e-9
    assert np.max(s.w.values) <= 2.0 + 1e-2


def test_cell_density_of_linear_state():
    g = make_grid(32)
    r, rho = cell_density(PdeState(ModelParams(3, 0.5), 0.0, GridFn(g, 0.5 * g.nodes)))
    assert np.allclose(rho, 27 * 0.5)
    assert r[-1] == 1.0


def test_initial_families(profile3):
    g = make_grid(32)
    params = ModelParams(3, 0.5 * profile3.M)
    assert np.allclose(initial_family("linear", g, params).values, params.m * g.nodes)
    assert np.allclose(initial_family("power:2", g, params).values, params.m * g.nodes ** 2)
    perturbed = initial_family("steady-perturbed:0.1", g, params, profile3).values
    assert perturbed[0] == 0.0
    assert perturbed[-1] == pytest.approx(params.m, abs=1e-10)
    for bad in ("gaussian", "power:abc", "power:-1"):
        with pytest.raises(ConfigError):
            initial_family(bad, g, params)
    with pytest.raises(ConfigError):
        initial_family("steady-perturbed:0.1", g, params)
    first = initial_family("random:2", g, params, rng=np.random.default_rng(5)).values
    again = initial_family("random:2", g, params, rng=np.random.default_rng(5)).values
    assert np.array_equal(first, again)
    assert first[-1] == params.m
    with pytest.raises(ConfigError):
        initial_family("random", g, params)


def test_ordered_pairs_stay_ordered():
    g = make_grid(64)
    rng = np.random.default_rng(3)
    params = ModelParams(2, 1.0)
    lo, hi = ordered_pair(g, params.m, rng)
    assert np.all(lo.values[1:-1] < hi.values[1:-1])
    i_lo = x_integrator(g, params, "imex", True)
    i_hi = x_integrator(g, params, "imex", True)
    v_lo, v_hi = lo.values, hi.values
    for k in range(300):
        v_lo = i_lo.advance(v_lo, k * 1e-3, 1e-3)
        v_hi = i_hi.advance(v_hi, k * 1e-3, 1e-3)
        assert np.max(v_lo - v_hi) <= 1e-8


@pytest.mark.slow
def test_x_and_w_solvers_agree():
    g = make_grid(128)
    params = ModelParams(2, 1.0)
    cfg = EvolveConfig(dt=1e-3, t_end=0.5, dense_until=0.0, snapshot_growth=2.0)
    ux = run(GridFn(g, g.nodes), params, cfg).states[-1]
    uw = run(GridFn(g, g.nodes), params, EvolveConfig(dt=1e-3, t_end=0.5, dense_until=0.0,
                                                      snapshot_growth=2.0, solver="w")).states[-1]
    assert np.max(np.abs(ux - uw)) < 2e-2


@pytest.mark.slow
def test_supercritical_mass_is_detected(profile3):
    g = make_grid(64)
    params = ModelParams(3, 1.3 * profile3.M)
    traj = run(GridFn(g, params.m * g.nodes), params,
               EvolveConfig(dt=1e-3, t_end=20.0, dense_until=0.0, blowup_ratio=30.0))
    assert traj.status == "supercritical-detected"
    assert traj.diagnostics[-1].sup_ratio > 30.0
