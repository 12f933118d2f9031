"""Concrete Lévy input processes for the single-server queue.

The net input is ``X_mu(t) = U(lambda t) - mu t`` where ``U`` is a spectrally
positive Lévy process with ``E[U(1)] = 1``.  Three instances are supported:

* compound Poisson with Exp(1) jumps (M/M/1 workload),
* compound Poisson with Pareto jumps normalised to unit mean (M/Pareto/1),
* Brownian motion with unit drift and variance rate ``sigma2`` (RBM).
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, MomentError, NormalizationError, ParameterError

__all__ = [
    "ModelKind",
    "InputModel",
    "Moments",
    "make_mm1",
    "make_mpareto",
    "make_rbm",
    "moments",
    "levy_exponent",
]

NORMALIZATION_TOL = 1e-12


class ModelKind(str, enum.Enum):
    COMPOUND_POISSON_EXP = "CompoundPoissonExp"
    COMPOUND_POISSON_PARETO = "CompoundPoissonPareto"
    BROWNIAN_DRIFT = "BrownianDrift"


@dataclass(frozen=True)
class Moments:
    """Second and third central moments of ``U(1)``."""

    u2: float
    u3: float


@dataclass(frozen=True)
class InputModel:
    """One of the three supported input processes.

    Build instances with :func:`make_mm1`, :func:`make_mpareto` or
    :func:`make_rbm`; the constructors enforce the parameter invariants.
    ``u3_override`` replaces the third central moment in all analytic
    formulas and exists only for fault-injection checks.
    """

    kind: ModelKind
    lam: float
    gamma: float | None = None
    k: float | None = None
    sigma2: float | None = None
    u3_override: float | None = field(default=None, compare=False)

    @property
    def is_compound_poisson(self) -> bool:
        return self.kind is not ModelKind.BROWNIAN_DRIFT

    @property
    def is_brownian(self) -> bool:
        return self.kind is ModelKind.BROWNIAN_DRIFT

    def with_lambda(self, lam: float) -> "InputModel":
        _check_positive("lambda", lam)
        return InputModel(self.kind, float(lam), self.gamma, self.k, self.sigma2, self.u3_override)

    def sample_jumps(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. jump sizes (compound-Poisson models only)."""
        if self.kind is ModelKind.COMPOUND_POISSON_EXP:
            return rng.standard_exponential(size)
        if self.kind is ModelKind.COMPOUND_POISSON_PARETO:
            # inverse CDF on (0, 1]; 1 - U avoids a zero base
            u = 1.0 - rng.random(size)
            return self.k * u ** (-1.0 / self.gamma)
        raise ParameterError("Brownian input has no jumps")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "lambda": self.lam}
        if self.kind is ModelKind.COMPOUND_POISSON_PARETO:
            d.update(gamma=self.gamma, k=self.k)
        elif self.kind is ModelKind.BROWNIAN_DRIFT:
            d["sigma2"] = self.sigma2
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InputModel":
        kind = ModelKind(d["kind"])
        lam = d["lambda"]
        if kind is ModelKind.COMPOUND_POISSON_EXP:
            return make_mm1(lam)
        if kind is ModelKind.COMPOUND_POISSON_PARETO:
            return make_mpareto(lam, d["gamma"], d["k"])
        return make_rbm(lam, d["sigma2"])


def _check_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be a positive finite number, got {value!r}")


def make_mm1(lam: float) -> InputModel:
    """Compound-Poisson input with Exp(1) jumps at rate ``lam``."""
    _check_positive("lambda", lam)
    return InputModel(ModelKind.COMPOUND_POISSON_EXP, float(lam))


def make_mpareto(lam: float, gamma: float, k: float) -> InputModel:
    """Compound-Poisson input with Pareto(shape ``gamma``, scale ``k``) jumps.

    The jump mean ``k*gamma/(gamma-1)`` must equal one and ``gamma > 3`` so
    that the third moment is finite.
    """
    _check_positive("lambda", lam)
    _check_positive("k", k)
    if not math.isfinite(gamma) or gamma <= 3:
        raise MomentError(f"Pareto shape must exceed 3 for a finite third moment, got {gamma}")
    mean = k * gamma / (gamma - 1.0)
    if abs(mean - 1.0) > NORMALIZATION_TOL:
        raise NormalizationError(f"Pareto jumps must have unit mean, got {mean!r}")
    return InputModel(ModelKind.COMPOUND_POISSON_PARETO, float(lam), gamma=float(gamma), k=float(k))


def make_rbm(lam: float, sigma2: float) -> InputModel:
    """Brownian input with unit drift and variance rate ``sigma2``."""
    _check_positive("lambda", lam)
    _check_positive("sigma2", sigma2)
    return InputModel(ModelKind.BROWNIAN_DRIFT, float(lam), sigma2=float(sigma2))


def moments(model: InputModel) -> Moments:
    """Central moments ``(u2, u3)`` of ``U(1)``.

    For unit-rate compound Poisson input the central moments of ``U(1)``
    coincide with its cumulants, i.e. with the raw jump moments.
    """
    if model.kind is ModelKind.COMPOUND_POISSON_EXP:
        u2, u3 = 2.0, 6.0
    elif model.kind is ModelKind.COMPOUND_POISSON_PARETO:
        g, k = model.gamma, model.k
        u2 = k**2 * g / (g - 2.0)
        u3 = k**3 * g / (g - 3.0)
    else:
        u2, u3 = model.sigma2, 0.0
    if model.u3_override is not None:
        u3 = float(model.u3_override)
    return Moments(u2, u3)


def _pareto_mgf_minus_one(theta: float, gamma: float, k: float) -> float:
    # E[exp(theta B)] - 1 with B = k * v**(-1/gamma), v ~ U(0, 1)
    def integrand(v):
        return math.expm1(theta * k * v ** (-1.0 / gamma))

    # the tolerance is below what double precision can certify near theta = 0;
    # quad then returns its best estimate, which is what we want
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=400)
    return val


def _kappa_u(model: InputModel, theta: float) -> float:
    if model.kind is ModelKind.COMPOUND_POISSON_EXP:
        if theta >= 1.0:
            raise DomainError(f"exponential-jump exponent is infinite for theta >= 1, got {theta}")
        return theta / (1.0 - theta)
    if model.kind is ModelKind.COMPOUND_POISSON_PARETO:
        if theta > 0.0:
            raise DomainError(f"Pareto-jump exponent is infinite for theta > 0, got {theta}")
        if theta == 0.0:
            return 0.0
        return _pareto_mgf_minus_one(theta, model.gamma, model.k)
    return theta + 0.5 * model.sigma2 * theta * theta


def levy_exponent(model: InputModel, mu: float, theta: float) -> float:
    """``kappa_mu(theta) = log E exp(theta X_mu(1)) = lambda kappa_U(theta) - mu theta``."""
    return model.lam * _kappa_u(model, float(theta)) - mu * theta
