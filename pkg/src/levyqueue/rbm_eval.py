"""Noise-free transient means of reflected Brownian motion.

Uses the classical closed-form transient law of RBM with drift ``m`` and
variance ``s2`` started at ``x``::

    P(Q(t) <= z) = Phi((z - x - m t) / (s sqrt t))
                   - exp(2 m z / s2) Phi((-z - x - m t) / (s sqrt t))

and integrates it twice (over ``z`` for the mean, over ``t`` for ``C_T``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy import integrate, special

from .errors import NumericError, ParameterError
from .model import InputModel

__all__ = ["RbmSpec", "rbm_spec", "rbm_cdf", "rbm_survival", "rbm_mean", "rbm_CT", "rbm_pi_T"]

_TAIL = 1e-13


@dataclass(frozen=True)
class RbmSpec:
    x: float
    m: float
    s2: float

    def __post_init__(self):
        if not self.s2 > 0:
            raise ParameterError("variance rate s2 must be positive")
        if self.x < 0:
            raise ParameterError("start must be non-negative")


def rbm_spec(model: InputModel, mu: float, x: float) -> RbmSpec:
    """RBM parameters of the workload under Brownian input at speed ``mu``."""
    if not model.is_brownian:
        raise ParameterError("rbm_eval applies to Brownian input only")
    return RbmSpec(float(x), model.lam - mu, model.lam * model.sigma2)


def rbm_survival(spec: RbmSpec, t: float, z: float) -> float:
    """``P(Q(t) > z)`` computed without cancellation."""
    if z < 0:
        return 1.0
    s = math.sqrt(spec.s2 * t)
    a = (z - spec.x - spec.m * t) / s
    b = (-z - spec.x - spec.m * t) / s
    return float(special.ndtr(-a) + math.exp(2.0 * spec.m * z / spec.s2 + special.log_ndtr(b)))


def rbm_cdf(spec: RbmSpec, t: float, z: float) -> float:
    """``P(Q(t) <= z | Q(0) = x)``; zero for ``z < 0``."""
    if not t > 0:
        raise ParameterError("t must be positive")
    if z < 0:
        return 0.0
    return min(1.0, max(0.0, 1.0 - rbm_survival(spec, t, z)))


def _upper_limit(spec: RbmSpec, t: float) -> float:
    z = max(spec.x + spec.m * t, 0.0) + 10.0 * math.sqrt(spec.s2 * t) + 1.0
    while rbm_survival(spec, t, z) > _TAIL:
        z *= 2.0
    return z


def _quad(f, a, b, what, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info, *rest = integrate.quad(f, a, b, full_output=1, **kw)
    if rest and err > 1e3 * max(kw.get("epsabs", 1e-8), 1e-12):
        raise NumericError(f"{what}: quadrature did not converge ({rest[0]}; estimate {val}, error {err})")
    return val


def rbm_mean(spec: RbmSpec, t: float) -> float:
    """``E[Q(t)]`` as the tail integral of the transient law."""
    if t < 0:
        raise ParameterError("t must be non-negative")
    if t == 0:
        return spec.x
    zmax = _upper_limit(spec, t)
    centre = spec.x + spec.m * t
    points = [centre] if 0 < centre < zmax else None
    return _quad(
        lambda z: rbm_survival(spec, t, z),
        0.0,
        zmax,
        "rbm_mean",
        epsabs=1e-10,
        epsrel=1e-10,
        limit=200,
        points=points,
    )


def rbm_CT(spec: RbmSpec, T: float) -> float:
    """``(1/T) int_0^T E[Q(t)] dt``."""
    if not T > 0:
        raise ParameterError("T must be positive")
    total = _quad(lambda t: rbm_mean(spec, t), 0.0, T, "rbm_CT", epsabs=1e-8, epsrel=1e-9, limit=200)
    return total / T


def rbm_pi_T(model: InputModel, mu: float, alpha: float, T: float, x: float) -> float:
    """Exact finite-horizon cost ``C_T(mu) + alpha mu`` for Brownian input."""
    return rbm_CT(rbm_spec(model, mu, x), T) + alpha * mu
