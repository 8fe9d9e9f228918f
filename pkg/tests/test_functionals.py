# tests/test_functionals.py
import numpy as np
import pytest

from core.errors import NonpositiveSlopeError, WrongFunctionalError
from core.evolution import EvolveConfig, run
from core.functionals import (
    F_energy,
    G_energy,
    dissipation,
    dissipation_residual_G,
    is_nonincreasing,
    lyapunov,
    lyapunov_series,
    metric_g,
    second_variation,
)
from core.profiles import ModelParams, sample_steady
from core.spectrum import stiffness_form
from core.weighted_norms import GridFn, make_grid, norm_L


def test_F_is_not_defined_in_two_dimensions():
    g = make_grid(16)
    with pytest.raises(WrongFunctionalError):
        F_energy(GridFn.sample(g, lambda x: x), ModelParams(2, 1.0))


def test_G_of_linear_profile():
    # int (ln 1 - 1) - int x^2 / (2x) = -1 - 1/4
    g = make_grid(64)
    assert G_energy(GridFn.sample(g, lambda x: x)) == pytest.approx(-1.25, rel=1e-9)


def test_F_of_linear_profile():
    # 9/4 - (1/2)(3/5) for q = 2/3
    g = make_grid(64)
    assert F_energy(GridFn.sample(g, lambda x: x), ModelParams(3, 1.0)) == pytest.approx(1.95, rel=1e-9)


def test_G_names_first_flat_cell():
    g = make_grid(16)
    v = g.nodes.copy()
    v[3] = v[2]
    with pytest.raises(NonpositiveSlopeError) as info:
        G_energy(GridFn(g, v))
    assert info.value.cell == 2


def test_lyapunov_of_zero_state():
    g = make_grid(16)
    assert lyapunov(GridFn.zeros(g), ModelParams(2, 0.0)) == 0.0
    assert lyapunov(GridFn.zeros(g), ModelParams(3, 0.0)) == 0.0


def test_metric_is_symmetric_and_dissipation_vanishes_at_rest():
    g = make_grid(64)
    params = ModelParams(3, 1.0)
    u = GridFn.sample(g, lambda x: x + 0.2 * x * (1 - x))
    h = GridFn.sample(g, lambda x: np.sin(np.pi * x))
    k = GridFn.sample(g, lambda x: x * x * (1 - x))
    assert metric_g(u, h, k, params) == pytest.approx(metric_g(u, k, h, params), rel=1e-13)
    assert dissipation(u, GridFn.zeros(g), params) == 0.0
    assert dissipation(u, h, params) > 0


def test_second_variation_matches_quadratic_form(profile3):
    g = make_grid(512)
    a = 0.5 * profile3.A
    params = ModelParams(3, float(sample_steady(profile3, a, np.array([1.0]))[0]))
    u = GridFn(g, sample_steady(profile3, a, g.nodes))
    h = GridFn.sample(g, lambda x: 0.1 * np.sin(np.pi * x))
    expected = stiffness_form(h, a, profile3) - norm_L(h, params.q) ** 2
    assert expected > 0
    assert second_variation(u, h, params) == pytest.approx(expected, rel=2e-2)


@pytest.mark.parametrize("N", [2, 3])
def test_lyapunov_decreases_along_runs(profiles, N):
    g = make_grid(64)
    m = 1.0 if N == 2 else 0.5 * profiles[N].M
    params = ModelParams(N, m)
    traj = run(GridFn(g, m * g.nodes), params, EvolveConfig(dt=1e-3, t_end=0.5))
    values = np.array([s.value for s in lyapunov_series(traj)])
    assert is_nonincreasing(values)
    assert values[-1] < values[0]


def test_G_dissipation_needs_two_dimensions(profile3):
    g = make_grid(32)
    params = ModelParams(3, 0.5 * profile3.M)
    traj = run(GridFn(g, params.m * g.nodes), params, EvolveConfig(dt=1e-2, t_end=0.1))
    with pytest.raises(WrongFunctionalError):
        dissipation_residual_G(traj)


def test_is_nonincreasing_tolerance():
    assert is_nonincreasing(np.array([3.0, 2.0, 2.0 + 1e-12, 1.0]))
    assert not is_nonincreasing(np.array([3.0, 2.0, 2.1]))
    assert is_nonincreasing(np.array([1.0]))
