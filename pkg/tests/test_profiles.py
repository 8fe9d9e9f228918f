# tests/test_profiles.py
import math
from fractions import Fraction

import numpy as np
import pytest

from core.errors import DomainError, ModelError, ProfileRangeError, SupercriticalMassError
from core.profiles import (
    X_MAX,
    ModelParams,
    build_profile,
    cell_mass,
    eval_ddU,
    eval_dU,
    eval_dwa,
    eval_U,
    eval_wa,
    ode_residual,
    sample_steady,
    solve_a_of_m,
)


def test_model_params_rejects_bad_dimension():
    with pytest.raises(ModelError):
        ModelParams(1, 0.5)
    with pytest.raises(ModelError):
        ModelParams(3, -1.0)


def test_q_is_exact_fraction():
    assert ModelParams(3, 1.0).q_exact == Fraction(2, 3)
    assert ModelParams(4).q == pytest.approx(0.5)


def test_two_dimensional_closed_form(profile2):
    x = np.linspace(0.0, 1.0, 10_000)
    for a in (0.5, 2.0, 10.0):
        exact = 2 * a * x / (2 + a * x)
        assert np.max(np.abs(eval_U(profile2, a, x) - exact)) <= 1e-8
    assert math.isinf(profile2.A)
    assert profile2.M == pytest.approx(2.0, abs=1e-10)


@pytest.mark.parametrize("m", [0.5, 1.0, 1.5])
def test_a_of_m_closed_form(profile2, m):
    assert solve_a_of_m(profile2, m) == pytest.approx(m / (1 - m / 2), abs=1e-8)


def test_a_of_m_zero_and_supercritical(profile3):
    assert solve_a_of_m(profile3, 0.0) == 0.0
    with pytest.raises(SupercriticalMassError) as info:
        solve_a_of_m(profile3, profile3.M)
    assert info.value.M == profile3.M


@pytest.mark.parametrize("N", [3, 4])
def test_higher_dimensions_have_finite_critical_point(profiles, N):
    p = profiles[N]
    assert 0 < p.A < X_MAX
    assert 0 < p.M < p.A
    assert np.all(np.diff(p.U1) >= -1e-12)
    assert float(eval_dU(p, 1.0, p.A)) == pytest.approx(0.0, abs=1e-8)
    assert ode_residual(p) < 1e-4


def test_critical_mass_is_max_of_profile(profile3):
    x = np.linspace(0.0, 1.0, 501)
    values = eval_U(profile3, profile3.A, x)
    assert np.max(values) == pytest.approx(profile3.M, rel=1e-9)


def test_dilation_identity(profile3):
    x = np.linspace(0.0, 1.0, 101)
    a = 0.5 * profile3.A
    assert np.allclose(eval_U(profile3, a, x), eval_U(profile3, 1.0, a * x), atol=1e-14)
    assert np.allclose(eval_dU(profile3, a, x), a * np.asarray(eval_dU(profile3, 1.0, a * x)), atol=1e-13)


def test_steady_state_hits_boundary_value(profile3):
    m = 0.5 * profile3.M
    a = solve_a_of_m(profile3, m)
    nodes = np.linspace(0.0, 1.0, 65)
    u = sample_steady(profile3, a, nodes)
    assert u[0] == 0.0
    assert u[-1] == pytest.approx(m, abs=1e-10)
    assert np.all(np.diff(u) > 0)


def test_wa_needs_subcritical_dilation(profile3):
    with pytest.raises(DomainError):
        eval_wa(profile3, profile3.A, 0.5)
    with pytest.raises(DomainError):
        eval_wa(profile3, 0.0, 0.5)
    assert float(eval_wa(profile3, 0.5 * profile3.A, 0.5)) > 0


def test_out_of_table_raises(profile2):
    with pytest.raises(ProfileRangeError):
        eval_U(profile2, 100.0, 1.0)


def test_cell_mass_two_dimensions():
    assert cell_mass(2.0, 2) == pytest.approx(8 * math.pi)


def _dilation(p):
    return 0.5 * (p.A if math.isfinite(p.A) else solve_a_of_m(p, 0.9 * p.M))


@pytest.mark.parametrize("N", [2, 3, 4])
def test_derivatives_match_finite_differences(profiles, N):
    p = profiles[N]
    a = _dilation(p)
    x = np.linspace(0.05, 0.95, 91)
    h = 1e-6
    fd_x = (np.asarray(eval_U(p, a, x + h)) - np.asarray(eval_U(p, a, x - h))) / (2 * h)
    assert np.allclose(eval_dU(p, a, x), fd_x, rtol=1e-6, atol=1e-6)
    fd_a = (np.asarray(eval_U(p, a + h, x)) - np.asarray(eval_U(p, a - h, x))) / (2 * h)
    assert np.allclose(eval_wa(p, a, x), fd_a, rtol=1e-6, atol=1e-6)
    fd_xx = (np.asarray(eval_dU(p, a, x + h)) - np.asarray(eval_dU(p, a, x - h))) / (2 * h)
    assert np.allclose(eval_ddU(p, a, x), fd_xx, rtol=1e-5, atol=1e-5)


def test_two_dimensional_derivatives_in_closed_form(profile2):
    # U_a(x) = 2ax/(2+ax): U_a'(x) = 4a/(2+ax)^2, w_a(x) = 4x/(2+ax)^2
    assert float(eval_dU(profile2, 2.0, 1.0)) == pytest.approx(0.5, abs=1e-8)
    assert float(eval_wa(profile2, 2.0, 1.0)) == pytest.approx(0.25, abs=1e-8)
    assert float(eval_ddU(profile2, 2.0, 0.0)) == pytest.approx(-4.0)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_wa_solves_the_linearized_steady_equation(profiles, N):
    # (w_a' / U_a'^q)' + w_a / x^(2-q) = 0
    p = profiles[N]
    q = p.q
    a = _dilation(p)
    x = np.linspace(0.1, 0.9, 81)
    h = 1e-5

    def flux(xs):
        return np.asarray(eval_dwa(p, a, xs)) / np.asarray(eval_dU(p, a, xs)) ** q

    residual = (flux(x + h) - flux(x - h)) / (2 * h) + np.asarray(eval_wa(p, a, x)) / x ** (2 - q)
    assert np.max(np.abs(residual)) <= 1e-5


@pytest.mark.parametrize("N", [2, 3, 4])
def test_ode_residual_along_tabulated_profile(profiles, N):
    assert ode_residual(profiles[N]) <= 1e-6


def test_critical_values_stable_under_tolerance_refinement(profile3):
    coarse = build_profile(3, tol=1e-8)
    assert coarse.A == pytest.approx(profile3.A, rel=1e-5)
    assert coarse.M == pytest.approx(profile3.M, rel=1e-6)


def test_three_dimensional_critical_point(profile3):
    assert profile3.A == pytest.approx(63.135, rel=1e-5)
    assert profile3.A < 0.99 * X_MAX


def test_independent_shot_agrees(profile3):
    other = build_profile(3, method="LSODA")
    assert other.A == pytest.approx(profile3.A, rel=2e-5)
    assert other.M == pytest.approx(profile3.M, rel=1e-6)
    half = 0.5 * profile3.A
    assert float(eval_U(other, half, 1.0)) == pytest.approx(float(eval_U(profile3, half, 1.0)), abs=1e-6)
