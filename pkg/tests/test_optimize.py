import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levyqueue.correction import InitialState, corrected_mu, mu_bullet, pi_hat
from levyqueue.errors import ConvexityError, ParameterError
from levyqueue.model import make_mm1, make_mpareto, make_rbm
from levyqueue.optimize import (
    SAAObjective,
    compare_staffing,
    golden_section,
    minimize_pi_hat,
    minimize_pi_T,
    optimality_gap,
    pi_hat_derivative,
    second_differences,
)
from levyqueue.rbm_eval import rbm_pi_T
from levyqueue.simulate import SimConfig
from levyqueue.stationary import mu_star_infinity

MM1 = make_mm1(1.0)
PARETO = make_mpareto(1.0, 16 / 5, 11 / 16)
RBM = make_rbm(1.0, 1.0)
RBM4 = make_rbm(1.0, 4.0)
ZERO = InitialState.deterministic(0.0)


# --------------------------------------------------------------------------
# corrected cost


@pytest.mark.parametrize("model", [MM1, PARETO, RBM])
@given(mu=st.floats(1.2, 6.0), T=st.floats(1.0, 100.0), x=st.floats(0.0, 4.0))
def test_pi_hat_derivative_matches_differences(model, mu, T, x):
    init = InitialState.deterministic(x)
    h = 1e-6
    fd = (pi_hat(model, mu + h, 1.0, T, init) - pi_hat(model, mu - h, 1.0, T, init)) / (2 * h)
    assert pi_hat_derivative(model, mu, 1.0, T, init) == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_short_horizon_has_no_interior_minimum():
    res = minimize_pi_hat(MM1, 1.0, 10.0, ZERO)
    assert not res.interior


@pytest.mark.parametrize("T", [20.0, 40.0, 80.0, 160.0])
def test_pi_hat_minimiser_first_order(T):
    res = minimize_pi_hat(MM1, 1.0, T, ZERO)
    assert res.interior
    assert abs(pi_hat_derivative(MM1, res.mu_star, 1.0, T, ZERO)) < 1e-10
    assert res.mu_star < mu_star_infinity(MM1, 1.0)


def test_pi_hat_minimiser_converges():
    mu_inf = mu_star_infinity(MM1, 1.0)
    shifts = [(minimize_pi_hat(MM1, 1.0, T, ZERO).mu_star - mu_inf) * T for T in (160.0, 640.0, 2560.0, 10240.0)]
    # the scaled shift approaches mu_bullet at rate 1/T
    errs = np.abs(np.array(shifts) - mu_bullet(MM1, 1.0, ZERO))
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] < 0.01


def test_pi_hat_rejects_bad_arguments():
    with pytest.raises(ParameterError):
        minimize_pi_hat(MM1, 0.0, 10.0, ZERO)
    with pytest.raises(ParameterError):
        minimize_pi_hat(MM1, 1.0, 0.0, ZERO)


# --------------------------------------------------------------------------
# golden section and SAA


def test_golden_section_quadratic():
    x, fx, n = golden_section(lambda t: (t - 0.3) ** 2 + 1.0, -2.0, 5.0, 1e-8)
    assert x == pytest.approx(0.3, abs=1e-8)
    assert fx == pytest.approx(1.0, abs=1e-15)
    assert n < 60


def test_second_differences():
    assert np.allclose(second_differences(np.arange(6.0) ** 2), 2.0)


def test_saa_objective_is_deterministic_and_convex():
    cfg = SimConfig(replications=4000, master_seed=3)
    obj = SAAObjective(MM1, 1.0, 5.0, ZERO, cfg)
    grid = np.linspace(0.0, 4.0, 41)
    a = obj.check_convexity(grid)
    b = obj(grid)
    assert np.array_equal(a, b)
    assert obj([grid[17]])[0] == b[17]


def test_saa_convexity_error():
    class Broken(SAAObjective):
        def __call__(self, mus):
            return -np.asarray(mus, dtype=float) ** 2

    with pytest.raises(ConvexityError):
        Broken(MM1, 1.0, 5.0, ZERO, SimConfig(replications=10)).check_convexity([0.0, 1.0, 2.0])


def test_minimize_pi_T_orders_costs():
    cfg = SimConfig(replications=20_000, master_seed=5)
    res = minimize_pi_T(MM1, 2.0, 10.0, ZERO, cfg, method="saa")
    assert res.interior
    obj = SAAObjective(MM1, 2.0, 10.0, ZERO, cfg)
    at_tilde, at_inf = obj([corrected_mu(MM1, 2.0, 10.0, ZERO), mu_star_infinity(MM1, 2.0)])
    assert res.pi_star <= at_tilde <= at_inf


def test_minimize_pi_T_rbm_route():
    res = minimize_pi_T(RBM, 2.0, 5.0, ZERO, SimConfig(), tol=1e-4)
    assert res.interior
    h = 1e-3
    left = rbm_pi_T(RBM, res.mu_star - h, 2.0, 5.0, 0.0)
    right = rbm_pi_T(RBM, res.mu_star + h, 2.0, 5.0, 0.0)
    assert res.pi_star <= min(left, right) + 1e-9
    with pytest.raises(ParameterError):
        minimize_pi_T(RBM, 2.0, 5.0, ZERO, SimConfig(), method="newton")


# --------------------------------------------------------------------------
# staffing comparison and optimality gap


def test_compare_staffing_table_cell():
    cmp = compare_staffing(MM1, 1.0, 5.0, ZERO, SimConfig(replications=50_000))
    assert cmp.mu_inf == 2.0
    assert cmp.mu_tilde == pytest.approx(1.5, abs=1e-12)
    assert abs(cmp.pi_at_mu_inf.mean - 2.675) <= max(0.03, 3 * cmp.pi_at_mu_inf.half_width)
    assert abs(cmp.pi_at_mu_tilde.mean - 2.400) <= max(0.03, 3 * cmp.pi_at_mu_tilde.half_width)
    assert abs(cmp.rel_reduction - 0.103) < 0.015


def test_compare_staffing_rbm_is_noise_free():
    cmp = compare_staffing(RBM4, 2.0, 10.0, ZERO, SimConfig())
    assert cmp.pi_at_mu_inf.half_width == 0.0
    assert round(cmp.pi_at_mu_inf.mean, 3) == 5.639
    assert round(cmp.mu_tilde, 3) == 1.7
    assert round(cmp.rel_reduction, 3) == 0.041
    with pytest.raises(ParameterError):
        compare_staffing(RBM4, 2.0, 10.0, ZERO, SimConfig(), method="bogus")


def test_optimality_gap_proxy_marks_short_horizons():
    rows = optimality_gap(MM1, 1.0, [10.0, 40.0], ZERO)
    assert math.isnan(rows[0][1])
    assert rows[1][1] > 0
    assert rows[1][2] == pytest.approx(rows[1][1] * 1600.0)


def test_optimality_gap_exact_rbm():
    rows = optimality_gap(RBM, 1.0, [10.0, 20.0, 40.0], ZERO, objective="exact")
    gaps = [r[1] for r in rows]
    assert all(g >= 0 for g in gaps)
    assert gaps[0] > gaps[1] > gaps[2]
    scaled = [r[2] for r in rows]
    assert max(scaled) / min(scaled) < 1.5


def test_optimality_gap_arguments():
    with pytest.raises(ParameterError):
        optimality_gap(MM1, 1.0, [10.0], InitialState.exponential(1.0))
    with pytest.raises(ParameterError):
        optimality_gap(MM1, 1.0, [10.0], ZERO, objective="exact")
    with pytest.raises(ParameterError):
        optimality_gap(MM1, 1.0, [10.0], ZERO, objective="other")
