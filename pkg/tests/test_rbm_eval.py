import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from levyqueue.errors import NumericError, ParameterError
from levyqueue.model import make_mm1, make_rbm
from levyqueue.rbm_eval import RbmSpec, _quad, rbm_cdf, rbm_CT, rbm_mean, rbm_pi_T, rbm_spec, rbm_survival
from levyqueue.stationary import stationary_mean

RBM = make_rbm(1.0, 1.0)
RBM4 = make_rbm(1.0, 4.0)


def test_spec_validation():
    with pytest.raises(ParameterError):
        RbmSpec(0.0, -1.0, 0.0)
    with pytest.raises(ParameterError):
        RbmSpec(-1.0, -1.0, 1.0)
    with pytest.raises(ParameterError):
        rbm_spec(make_mm1(1.0), 2.0, 0.0)
    assert rbm_spec(RBM4, 3.0, 1.0) == RbmSpec(1.0, -2.0, 4.0)


@settings(max_examples=50)
@given(
    x=st.floats(0, 5),
    m=st.floats(-3, 1),
    t=st.floats(0.01, 20),
    z1=st.floats(0, 10),
    z2=st.floats(0, 10),
)
def test_cdf_is_a_distribution(x, m, t, z1, z2):
    spec = RbmSpec(x, m, 1.0)
    lo, hi = sorted((z1, z2))
    a, b = rbm_cdf(spec, t, lo), rbm_cdf(spec, t, hi)
    assert 0.0 <= a <= b + 1e-15 <= 1.0 + 1e-15
    assert rbm_cdf(spec, t, -1.0) == 0.0


def test_cdf_limits():
    spec = RbmSpec(2.0, -1.0, 1.0)
    assert rbm_cdf(spec, 1.0, 200.0) == 1.0
    # short times concentrate the law at the start
    assert rbm_cdf(spec, 1e-8, 1.99) < 1e-12
    assert rbm_cdf(spec, 1e-8, 2.01) > 1 - 1e-12
    with pytest.raises(ParameterError):
        rbm_cdf(spec, 0.0, 1.0)


def test_cdf_converges_to_exponential():
    spec = RbmSpec(0.0, -1.0, 1.0)
    for z in (0.1, 0.5, 2.0):
        assert rbm_cdf(spec, 200.0, z) == pytest.approx(1 - math.exp(-2 * z), abs=1e-12)


def test_survival_matches_cdf():
    spec = RbmSpec(1.0, -0.5, 2.0)
    for z in (0.0, 0.3, 4.0):
        assert rbm_survival(spec, 1.5, z) + rbm_cdf(spec, 1.5, z) == pytest.approx(1.0, abs=1e-15)


def test_chapman_kolmogorov():
    """Propagating the law from 0 to s, then s to t, reproduces the law at t."""
    m, s2, x, s, t, z = -0.7, 1.3, 1.0, 0.6, 1.5, 0.8
    first = RbmSpec(x, m, s2)

    def density(y):
        h = 1e-5
        return (rbm_cdf(first, s, y + h) - rbm_cdf(first, s, max(y - h, 0.0))) / (y + h - max(y - h, 0.0))

    atom = rbm_cdf(first, s, 0.0)
    cont = integrate.quad(lambda y: density(y) * rbm_cdf(RbmSpec(y, m, s2), t - s, z), 0.0, 20.0, limit=200)[0]
    total = atom * rbm_cdf(RbmSpec(0.0, m, s2), t - s, z) + cont
    assert total == pytest.approx(rbm_cdf(first, t, z), abs=1e-6)


def test_cdf_against_brownian_extremum():
    """At x = 0 the reflected value equals the running maximum of the free motion."""
    rng = np.random.default_rng(31)
    n, t = 20_000, 1.0
    w = rng.standard_normal(n) * math.sqrt(t)
    e = rng.exponential(1.0, n)
    # maximum of a Brownian bridge on [0, t] ending at w
    mx = 0.5 * (w + np.sqrt(w * w + 2.0 * t * e))
    spec = RbmSpec(0.0, 0.0, 1.0)
    for z in (0.3, 1.0, 2.0):
        p = np.mean(mx <= z)
        assert abs(p - rbm_cdf(spec, t, z)) < 4 * math.sqrt(p * (1 - p) / n)


def test_mean_limits():
    spec = rbm_spec(RBM, 2.0, 3.0)
    assert rbm_mean(spec, 0.0) == 3.0
    assert rbm_mean(spec, 1e-6) == pytest.approx(3.0 - 1e-6, abs=1e-8)
    # drift -1 from x = 3: stationary within 1e-4 by t = 50
    assert rbm_mean(spec, 50.0) == pytest.approx(stationary_mean(RBM, 2.0), abs=1e-4)
    with pytest.raises(ParameterError):
        rbm_mean(spec, -1.0)


def test_mean_zero_drift():
    # E|B_t| for standard motion started at 0
    spec = RbmSpec(0.0, 0.0, 1.0)
    assert rbm_mean(spec, 2.0) == pytest.approx(math.sqrt(2 * 2.0 / math.pi), rel=1e-9)


def test_CT_long_horizon():
    spec = rbm_spec(RBM, 2.0, 0.0)
    assert rbm_CT(spec, 1000.0) == pytest.approx(0.5 - 0.025 / 100, abs=1e-5)
    with pytest.raises(ParameterError):
        rbm_CT(spec, 0.0)


@pytest.mark.parametrize(
    "model,mu,alpha,T,expected",
    [
        (RBM, 1.5, 2.0, 5.0, 3.707),
        (RBM, 1.2, 2.0, 5.0, 3.363),
        (RBM4, 2.0, 2.0, 10.0, 5.639),
        (RBM4, 1.7, 2.0, 10.0, 5.409),
    ],
)
def test_table_spot_values(model, mu, alpha, T, expected):
    assert round(rbm_pi_T(model, mu, alpha, T, 0.0), 3) == expected


def test_quadrature_failure_raises():
    with pytest.raises(NumericError):
        _quad(lambda z: 1.0 / abs(z - 0.5001), 0.0, 1.1, "probe", epsabs=1e-10, limit=20)
