# tests/test_spectrum.py
import numpy as np
import pytest

from core.errors import DomainError
from core.profiles import eval_dU, eval_U, eval_wa, solve_a_of_m
from core.spectrum import (
    apply_linearized,
    assemble,
    beesack_residual,
    beesack_terms,
    dense_eigenvalues,
    hardy_pencil,
    lambda1,
    lambda2,
    parts_identity_residual,
    linearized_terms,
    pde_rhs_terms,
    remainder,
    remainder_terms,
    smallest_eigenpair,
)
from core.weighted_norms import GridFn, make_grid


def test_hardy_pencil_approaches_one_quarter_from_above():
    coarse = smallest_eigenpair(hardy_pencil(make_grid(512))).lambda1
    fine = smallest_eigenpair(hardy_pencil(make_grid(1024))).lambda1
    assert 0.25 < fine < coarse


def test_inverse_iteration_matches_dense_solve(profile2):
    g = make_grid(128)
    a = solve_a_of_m(profile2, 1.0)
    pencil = assemble(g, a, profile2)
    res = smallest_eigenpair(pencil)
    dense = dense_eigenvalues(pencil, 2)
    assert res.lambda1 == pytest.approx(dense[0], rel=1e-9)
    assert lambda2(pencil, res) == pytest.approx(dense[1], rel=1e-8)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_first_eigenvalue_exceeds_one(profiles, N):
    p = profiles[N]
    a = 0.5 * solve_a_of_m(p, 0.9 * p.M)
    res = lambda1(a, make_grid(256), p)
    assert res.lambda1 > 1.0 + res.refinement_gap
    assert res.n == 256
    phi = res.phi1.values
    assert phi[0] == 0.0 and phi[-1] == 0.0
    assert np.all(phi[1:-1] > 0)


def test_ground_state_is_rayleigh_minimizer(profile3):
    g = make_grid(128)
    pencil = assemble(g, 0.5 * profile3.A, profile3)
    res = smallest_eigenpair(pencil)
    trial = GridFn.sample(g, lambda x: np.sin(np.pi * x))
    assert pencil.rayleigh(res.phi1) == pytest.approx(res.lambda1, rel=1e-10)
    assert pencil.rayleigh(trial) > res.lambda1

    rng = np.random.default_rng(11)
    x = g.nodes
    for k in range(100):
        if k % 2:
            values = rng.normal(size=x.size)
        else:
            c = rng.normal(size=4)
            values = sum(ck * np.sin((j + 1) * np.pi * x) for j, ck in enumerate(c))
        values[0] = values[-1] = 0.0
        assert pencil.rayleigh(GridFn(g, values)) >= res.lambda1 * (1 - 1e-12)


def test_dilation_must_be_subcritical(profile3):
    g = make_grid(32)
    with pytest.raises(DomainError):
        assemble(g, profile3.A, profile3)
    with pytest.raises(DomainError):
        assemble(g, 0.0, profile3)


def test_lambda1_decreases_toward_A(profile3):
    # the 1/U_a'^q weight steepens near x = 1 as a -> A; coarse uniform grids lose the trend
    g = make_grid(1024, 2.0)
    lams = [lambda1(f * profile3.A, g, profile3, refine=False).lambda1 for f in (0.2, 0.5, 0.8)]
    assert lams[0] > lams[1] > lams[2] > 1.0


@pytest.mark.parametrize("N", [2, 3])
def test_beesack_identity(profiles, N):
    p = profiles[N]
    a = 0.5 * solve_a_of_m(p, 0.9 * p.M)
    h = GridFn.sample(make_grid(1024), lambda x: np.sin(np.pi * x) + 0.3 * np.sin(2 * np.pi * x))
    stiff, mass, square = beesack_terms(h, a, p)
    assert stiff > mass > 0
    assert square >= 0
    assert beesack_residual(h, a, p) < 1e-5


@pytest.mark.parametrize("N", [2, 3])
def test_linearized_quadratic_form_identity(profiles, N):
    p = profiles[N]
    a = 0.5 * solve_a_of_m(p, 0.9 * p.M)
    f = lambda x: np.sin(np.pi * x) * (1 + x)
    coarse = parts_identity_residual(GridFn.sample(make_grid(256), f), a, p)
    fine = parts_identity_residual(GridFn.sample(make_grid(512), f), a, p)
    assert fine < 1e-3
    assert fine < coarse


def test_remainder_identity_is_exact():
    rng = np.random.default_rng(5)
    x = rng.uniform(0.05, 1.0, 200)
    U = rng.uniform(0.1, 1.5, 200)
    dU = rng.uniform(0.2, 1.0, 200)
    ddU = rng.normal(size=200)
    h, ddh = rng.normal(scale=0.1, size=(2, 200))
    dh = rng.uniform(-0.1, 0.1, 200)
    for q in (1.0, 2 / 3, 0.5):
        lhs = pde_rhs_terms(x, U + h, dU + dh, ddU + ddh, q) - pde_rhs_terms(x, U, dU, ddU, q)
        rhs = linearized_terms(x, U, dU, h, dh, ddh, q) + remainder_terms(U, dU, h, dh, q)
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_remainder_leaves_linearization_regime():
    with pytest.raises(DomainError):
        remainder_terms(np.array([1.0]), np.array([0.5]), np.array([0.1]), np.array([-0.6]), 0.5)


def test_remainder_is_quadratic_in_h(profile2):
    g = make_grid(256)
    a = solve_a_of_m(profile2, 1.0)
    h = GridFn.sample(g, lambda x: np.sin(np.pi * x))
    r1 = np.max(np.abs(remainder(h * 1e-2, a, profile2).values))
    r2 = np.max(np.abs(remainder(h * 5e-3, a, profile2).values))
    assert r1 / r2 == pytest.approx(4.0, rel=5e-2)


def test_steady_family_derivative_is_a_zero_mode(profile2):
    g = make_grid(512)
    a = solve_a_of_m(profile2, 1.0)
    wa = GridFn(g, np.asarray(eval_wa(profile2, a, g.nodes)))
    inner = (g.nodes > 0.1) & (g.nodes < 0.9)
    for form in ("expanded", "divergence"):
        Lw = apply_linearized(wa, a, profile2, form=form).values
        assert np.max(np.abs(Lw[inner])) < 1e-3


def test_linearized_forms_agree(profile3):
    g = make_grid(512)
    a = 0.5 * profile3.A
    h = GridFn.sample(g, lambda x: np.sin(np.pi * x))
    expanded = apply_linearized(h, a, profile3, "expanded").values
    divergence = apply_linearized(h, a, profile3, "divergence").values
    inner = g.nodes > 0.1
    scale = np.max(np.abs(expanded[inner]))
    assert np.max(np.abs(expanded[inner] - divergence[inner])) < 1e-2 * scale
    with pytest.raises(ValueError):
        apply_linearized(h, a, profile3, "weak")


def test_profile_values_used_by_pencil_are_positive(profile3):
    x = np.linspace(0.0, 1.0, 33)
    a = 0.9 * profile3.A
    assert np.all(np.asarray(eval_dU(profile3, a, x)) > 0)
    assert np.all(np.diff(eval_U(profile3, a, x)) > 0)
