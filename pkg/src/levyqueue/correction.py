"""Finite-horizon correction of the stationary congestion cost.

The transient error ``Omega_T = C_T - C_inf`` is approximated by
``Psi_T = (E[Q(0)^2] - E[Q(inf)^2]) / (2 T (mu - lambda))`` with an
``O(1/T^2)`` remainder whose size is bounded by :func:`delta_bound_xy`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError, UnsupportedAnalyticsError
from .model import InputModel, moments
from .stationary import (
    check_alpha,
    check_stable,
    mu_star_infinity,
    stationary_mean,
    stationary_moments,
)

__all__ = [
    "InitialState",
    "CorrectionTerms",
    "psi_xy",
    "psi_T",
    "expected_passage_time",
    "passage_time_second_moment",
    "delta_bound_xy",
    "delta_bound",
    "correction_terms",
    "approx_cost",
    "pi_hat",
    "mu_bullet",
    "corrected_mu",
]


@dataclass(frozen=True)
class InitialState:
    """Law of the initial workload ``Q(0)``.

    ``deterministic``  -- ``Q(0) = x``
    ``exponential``    -- ``Q(0) ~ Exp`` with mean ``m``
    ``warmup``         -- endpoint of a path of length ``burn_in`` started empty
                          (simulation only, no closed-form moments)
    ``moments``        -- analytic-only start given by its moments
    """

    variant: str
    value: float
    third: float | None = None

    def __post_init__(self):
        if self.variant not in ("deterministic", "exponential", "warmup", "moments"):
            raise ParameterError(f"unknown initial-state variant {self.variant!r}")
        v = self.value
        if not math.isfinite(v):
            raise ParameterError("initial-state parameter must be finite")
        if self.variant == "deterministic" and v < 0:
            raise ParameterError(f"initial workload must be >= 0, got {v}")
        if self.variant in ("exponential", "warmup") and v <= 0:
            raise ParameterError(f"{self.variant} parameter must be > 0, got {v}")
        if self.variant == "moments" and v < 0:
            raise ParameterError("second moment must be >= 0")

    @classmethod
    def deterministic(cls, x: float) -> "InitialState":
        return cls("deterministic", float(x))

    @classmethod
    def exponential(cls, mean: float) -> "InitialState":
        return cls("exponential", float(mean))

    @classmethod
    def warmup(cls, burn_in: float) -> "InitialState":
        return cls("warmup", float(burn_in))

    @classmethod
    def with_moments(cls, second: float, third: float | None = None) -> "InitialState":
        return cls("moments", float(second), None if third is None else float(third))

    @classmethod
    def stationary(cls, model: InputModel, mu: float) -> "InitialState":
        """Analytic stationary start: second moment from the steady-state law."""
        return cls.with_moments(stationary_moments(model, mu).second_moment)

    @property
    def is_deterministic(self) -> bool:
        return self.variant == "deterministic"

    @property
    def has_moments(self) -> bool:
        return self.variant != "warmup"

    @property
    def second_moment(self) -> float:
        if self.variant == "deterministic":
            return self.value**2
        if self.variant == "exponential":
            return 2.0 * self.value**2
        if self.variant == "moments":
            return self.value
        raise UnsupportedAnalyticsError("warm-up initial state has no closed-form moments")

    @property
    def third_moment(self) -> float:
        if self.variant == "deterministic":
            return self.value**3
        if self.variant == "exponential":
            return 6.0 * self.value**3
        if self.variant == "moments" and self.third is not None:
            return self.third
        raise UnsupportedAnalyticsError(f"no third moment available for {self.variant!r} start")

    def to_dict(self) -> dict:
        d = {"kind": self.variant, "value": self.value}
        if self.third is not None:
            d["third"] = self.third
        return d


@dataclass(frozen=True)
class CorrectionTerms:
    """Leading-order transient error and a bound on the remainder."""

    psi_T: float
    delta_bound: float


def _check_T(T: float) -> None:
    if not (T > 0):
        raise ParameterError(f"horizon T must be positive, got {T!r}")


def psi_xy(x: float, y: float, model: InputModel, mu: float, T: float) -> float:
    """``(1/T) int_0^inf E[Q^x(t) - Q^y(t)] dt`` for deterministic starts."""
    if x < 0 or y < 0:
        raise ParameterError("initial workloads must be non-negative")
    _check_T(T)
    d = check_stable(model, mu)
    return (x * x - y * y) / (2.0 * T * d)


def psi_T(model: InputModel, mu: float, T: float, init: InitialState) -> float:
    _check_T(T)
    d = check_stable(model, mu)
    q2 = init.second_moment
    return (q2 - stationary_moments(model, mu).second_moment) / (2.0 * T * d)


def expected_passage_time(x: float, model: InputModel, mu: float) -> float:
    """Mean time for the workload started at ``x`` to empty."""
    if x < 0:
        raise ParameterError("x must be non-negative")
    return x / check_stable(model, mu)


def passage_time_second_moment(v: float, model: InputModel, mu: float) -> float:
    if v < 0:
        raise ParameterError("v must be non-negative")
    d = check_stable(model, mu)
    return v * v / d**2 + moments(model).u2 * v / d**3


def _delta_poly(m2: float, m3: float, u2: float, d: float, T: float) -> float:
    return (m3 / (3.0 * d**2) + u2 * m2 / (2.0 * d**3)) / T**2


def delta_bound_xy(x: float, y: float, model: InputModel, mu: float, T: float) -> float:
    """Upper bound on ``|Omega^{x,y}_T - Psi^{x,y}_T|``."""
    if x < 0 or y < 0:
        raise ParameterError("initial workloads must be non-negative")
    _check_T(T)
    d = check_stable(model, mu)
    z = max(x, y)
    return _delta_poly(z * z, z**3, moments(model).u2, d, T)


def delta_bound(
    model: InputModel,
    mu: float,
    T: float,
    init: InitialState,
    stationary_third_moment: float | None = None,
) -> float:
    """Bound on ``|Omega_T - Psi_T|`` for a deterministic start against a
    stationary comparison queue.

    Uses ``max(x, Q(inf)) <= x + Q(inf)``, which needs ``E[Q(inf)^3]``; that
    moment is model specific and must be supplied by the caller.
    """
    if not init.is_deterministic:
        raise UnsupportedAnalyticsError("randomised remainder bound needs a deterministic start")
    if stationary_third_moment is None:
        raise UnsupportedAnalyticsError("E[Q(inf)^3] must be supplied for the randomised bound")
    _check_T(T)
    d = check_stable(model, mu)
    x = init.value
    st = stationary_moments(model, mu)
    q1, q2, q3 = st.mean_workload, st.second_moment, stationary_third_moment
    m2 = x * x + 2 * x * q1 + q2
    m3 = x**3 + 3 * x * x * q1 + 3 * x * q2 + q3
    return _delta_poly(m2, m3, moments(model).u2, d, T)


def correction_terms(
    model: InputModel,
    mu: float,
    T: float,
    init: InitialState,
    stationary_third_moment: float | None = None,
) -> CorrectionTerms:
    return CorrectionTerms(
        psi_T(model, mu, T, init),
        delta_bound(model, mu, T, init, stationary_third_moment),
    )


def approx_cost(model: InputModel, mu: float, T: float, init: InitialState) -> float:
    """Corrected congestion cost ``C_inf(mu) + Psi_T(mu)``."""
    return stationary_mean(model, mu) + psi_T(model, mu, T, init)


def pi_hat(model: InputModel, mu: float, alpha: float, T: float, init: InitialState) -> float:
    check_alpha(alpha)
    return approx_cost(model, mu, T, init) + alpha * mu


def mu_bullet(model: InputModel, alpha: float, init: InitialState) -> float:
    """First-order coefficient of the horizon correction to the optimal speed."""
    check_alpha(alpha)
    m = moments(model)
    lam = model.lam
    return (
        init.second_moment / math.sqrt(8.0 * lam * m.u2 * alpha)
        - m.u3 / (3.0 * m.u2)
        - 3.0 * math.sqrt(alpha * lam * m.u2 / 8.0)
    )


def corrected_mu(model: InputModel, alpha: float, T: float, init: InitialState) -> float:
    """``[mu_star_inf + mu_bullet / T]^+``."""
    _check_T(T)
    value = mu_star_infinity(model, alpha) + mu_bullet(model, alpha, init) / T
    return value if value > 0.0 else 0.0
