"""Steady-state workload moments, stationary cost and its minimiser."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError, StabilityError
from .model import InputModel, moments

__all__ = [
    "StationaryResult",
    "check_stable",
    "check_alpha",
    "stationary_moments",
    "stationary_mean",
    "pi_infinity",
    "mu_star_infinity",
    "pi_star_infinity",
    "benchmark_congestion",
]

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class StationaryResult:
    mean_workload: float
    second_moment: float


def check_stable(model: InputModel, mu: float) -> float:
    """Return ``mu - lambda``; raise :class:`StabilityError` near or below the boundary."""
    if not mu > model.lam * (1.0 + STABILITY_MARGIN):
        raise StabilityError(f"need mu > lambda for a stationary regime (mu={mu}, lambda={model.lam})")
    return mu - model.lam


def check_alpha(alpha: float) -> None:
    if not (math.isfinite(alpha) and alpha > 0):
        raise ParameterError(f"staffing cost alpha must be positive, got {alpha!r}")


def stationary_moments(model: InputModel, mu: float) -> StationaryResult:
    d = check_stable(model, mu)
    m = moments(model)
    lam = model.lam
    mean = lam * m.u2 / (2.0 * d)
    second = lam**2 * m.u2**2 / (2.0 * d**2) + lam * m.u3 / (3.0 * d)
    return StationaryResult(mean, second)


def stationary_mean(model: InputModel, mu: float) -> float:
    d = check_stable(model, mu)
    return model.lam * moments(model).u2 / (2.0 * d)


def pi_infinity(model: InputModel, mu: float, alpha: float) -> float:
    """Stationary cost ``E[Q_mu(inf)] + alpha mu``."""
    check_alpha(alpha)
    return stationary_mean(model, mu) + alpha * mu


def mu_star_infinity(model: InputModel, alpha: float) -> float:
    check_alpha(alpha)
    return model.lam + math.sqrt(model.lam * moments(model).u2 / (2.0 * alpha))


def pi_star_infinity(model: InputModel, alpha: float) -> float:
    check_alpha(alpha)
    return alpha * model.lam + math.sqrt(2.0 * alpha * model.lam * moments(model).u2)


def benchmark_congestion(model: InputModel, alpha: float) -> float:
    """Stationary mean workload when staffed at ``mu_star_infinity``."""
    check_alpha(alpha)
    return math.sqrt(alpha * model.lam * moments(model).u2 / 2.0)
