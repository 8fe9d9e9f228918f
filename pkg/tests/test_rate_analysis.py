# tests/test_rate_analysis.py
import math

import numpy as np
import pytest

from core.errors import BelowFloorError, DomainError, InsufficientSamplesError
from core.evolution import EvolveConfig, discrete_steady_state, run
from core.profiles import ModelParams, solve_a_of_m
from core.rate_analysis import (
    NormSeries,
    RateFit,
    fit_rate,
    default_window,
    norm_series,
    optimality_report,
    rate_consistency,
    smoothing_check,
    smoothing_exponent,
    theoretical_rate,
)
from core.spectrum import SpectralResult
from core.weighted_norms import GridFn, make_grid


def _synthetic(rate=0.7, t_end=30.0, k=301):
    t = np.linspace(0.0, t_end, k)
    return NormSeries(t, 0.3 * np.exp(-rate * t), 2.0 * np.exp(-rate * t))


def _spectral(lam, grid=None):
    grid = grid or make_grid(16)
    return SpectralResult(lam, GridFn.zeros(grid), 1, 0.0, 1.0)


def test_exact_exponential_is_fitted_exactly():
    s = _synthetic()
    fit = fit_rate(s, "L")
    assert fit.slope == pytest.approx(0.7, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.window[0] >= 1.0
    assert fit_rate(s, "C1").slope == pytest.approx(0.7, rel=1e-10)


def test_default_window_skips_transient_and_floor():
    t = np.linspace(0.0, 60.0, 601)
    s = NormSeries(t, np.maximum(np.exp(-t), 1e-13), np.exp(-t))
    t_a, t_b = default_window(s, "L")
    assert t_a == pytest.approx(4.7, abs=0.11)
    assert t_b < 25.4


def test_floor_and_sample_errors():
    t = np.linspace(0.0, 10.0, 50)
    with pytest.raises(BelowFloorError):
        fit_rate(NormSeries(t, np.full(50, 1e-13), np.full(50, 1e-13)))
    with pytest.raises(InsufficientSamplesError):
        fit_rate(_synthetic(), window=(5.0, 5.5))


def test_series_validation():
    with pytest.raises(ValueError):
        NormSeries(np.array([0.0, 1.0, 1.0]), np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        _synthetic().values("H")


def test_theoretical_rate_two_dimensions(profile2):
    # U_a'(1) = a / (1 + a/2)^2 = 1/2 at a = 2
    assert theoretical_rate(2.0, 0.9, _spectral(1.5), profile2) == pytest.approx(0.9 * 0.5 * 0.5, rel=1e-8)
    with pytest.raises(DomainError):
        theoretical_rate(2.0, 1.0, _spectral(1.5), profile2)
    with pytest.raises(DomainError):
        theoretical_rate(2.0, 0.5, _spectral(0.99), profile2)


def test_smoothing_exponent():
    assert smoothing_exponent(2) == 1.5
    assert smoothing_exponent(4) == 2.0


def test_rate_consistency():
    a = RateFit("L", 0.5, 1e-3, 0.0, 0.999, (1.0, 10.0))
    b = RateFit("C1", 0.501, 1e-3, 0.0, 0.999, (1.0, 10.0))
    c = RateFit("C1", 0.8, 1e-3, 0.0, 0.999, (1.0, 10.0))
    assert rate_consistency(a, b).passed
    report = rate_consistency(a, c)
    assert not report.passed
    assert report.difference == pytest.approx(0.3)

    sharp_L = RateFit("L", 0.5, 1e-5, 0.0, 0.999, (1.0, 10.0))
    sharp_C1 = RateFit("C1", 0.5002, 1e-5, 0.0, 0.999, (1.0, 10.0))
    assert rate_consistency(sharp_L, sharp_C1).passed
    strict = rate_consistency(sharp_L, sharp_C1, rel_floor=0.0)
    assert not strict.passed
    assert strict.tolerance == pytest.approx(3e-5)


def test_optimality_report_is_data_only(profile2):
    fit = RateFit("L", 0.4, 1e-3, 0.0, 0.999, (1.0, 10.0))
    report = optimality_report(fit, _spectral(1.5), profile2, 2.0)
    assert report["lambda1_rate"] == pytest.approx(0.75, rel=1e-8)
    assert report["lambda1_minus_1_rate"] == pytest.approx(0.25, rel=1e-8)
    assert report["measured_over_lambda1_minus_1_rate"] == pytest.approx(1.6, rel=1e-8)


def test_smoothing_check_from_steady_state(profile2):
    g = make_grid(64)
    params = ModelParams(2, 1.0)
    ref = discrete_steady_state(g, params, profile2)
    traj = run(ref, params, EvolveConfig(dt=1e-2, t_end=2.0, dense_until=2.0, snapshot_every=1))
    a = solve_a_of_m(profile2, 1.0)
    check = smoothing_check(traj, 1.0, profile2, a, reference=ref)
    assert check.beta == 1.5
    assert check.ratios.size > 0
    assert check.bound == 0.0
    with pytest.raises(DomainError):
        smoothing_check(traj, 0.5, profile2, a, reference=ref)


def test_norm_series_decays_along_a_run(profile2):
    g = make_grid(64)
    params = ModelParams(2, 1.0)
    ref = discrete_steady_state(g, params, profile2)
    traj = run(GridFn(g, g.nodes), params, EvolveConfig(dt=1e-2, t_end=10.0))
    s = norm_series(traj, ref)
    assert s.normL[-1] < 0.5 * s.normL[0]
    assert s.normC1[-1] < s.normC1[0]
    assert not math.isnan(s.normL[-1])
