"""Minimisers of the stationary, corrected and finite-horizon costs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize as sopt

from .correction import InitialState, corrected_mu, mu_bullet, pi_hat
from .errors import ConvexityError, LevyQueueError, NumericError, ParameterError
from .model import InputModel, moments
from .rbm_eval import rbm_pi_T
from .simulate import CostEstimate, SimConfig, estimate_CT_many, simulate_integrals
from .stationary import check_alpha, mu_star_infinity

__all__ = [
    "MinimizerResult",
    "StaffingComparison",
    "pi_hat_derivative",
    "search_upper",
    "minimize_pi_hat",
    "SAAObjective",
    "golden_section",
    "second_differences",
    "minimize_pi_T",
    "compare_staffing",
    "optimality_gap",
]

PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class MinimizerResult:
    mu_star: float
    pi_star: float
    bracket: tuple[float, float]
    evaluations: int
    interior: bool = True


@dataclass(frozen=True)
class StaffingComparison:
    """Costs of the stationary and corrected staffing levels (one table row)."""

    mu_inf: float
    pi_at_mu_inf: CostEstimate
    mu_tilde: float
    pi_at_mu_tilde: CostEstimate
    rel_reduction: float


def search_upper(model: InputModel, alpha: float) -> float:
    return mu_star_infinity(model, alpha) + 10.0 / math.sqrt(alpha)


def pi_hat_derivative(model: InputModel, mu: float, alpha: float, T: float, init: InitialState) -> float:
    """Exact derivative of ``Pi_inf(mu) + Psi_T(mu)`` with respect to ``mu``."""
    m = moments(model)
    lam = model.lam
    d = mu - lam
    s = init.second_moment
    corr = -s / d**2 + 1.5 * lam**2 * m.u2**2 / d**4 + 2.0 * lam * m.u3 / (3.0 * d**3)
    return -lam * m.u2 / (2.0 * d**2) + alpha + corr / (2.0 * T)


def minimize_pi_hat(model: InputModel, alpha: float, T: float, init: InitialState) -> MinimizerResult:
    """Local minimiser of the corrected cost nearest the stationary optimum.

    The corrected cost tends to ``-inf`` as ``mu -> lambda`` whenever the
    bracketed term is negative, so the search looks for the largest sign
    change of the derivative from ``-`` to ``+`` on ``(lambda(1+1e-6), hi]``.
    """
    check_alpha(alpha)
    if not T > 0:
        raise ParameterError("T must be positive")
    lam = model.lam
    lo, hi = lam * (1.0 + 1e-6), search_upper(model, alpha)
    grid = lam + np.geomspace(lo - lam, hi - lam, 4000)
    dfun = lambda mu: pi_hat_derivative(model, mu, alpha, T, init)  # noqa: E731
    slopes = np.array([dfun(mu) for mu in grid])
    evaluations = grid.size
    neg = np.nonzero(slopes < 0)[0]
    if neg.size == 0:
        return MinimizerResult(lo, pi_hat(model, lo, alpha, T, init), (lo, hi), evaluations, interior=False)
    i = neg[-1]
    if i == grid.size - 1:
        return MinimizerResult(hi, pi_hat(model, hi, alpha, T, init), (lo, hi), evaluations, interior=False)
    a, b = grid[i], grid[i + 1]
    root, info = sopt.brentq(dfun, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, full_output=True)
    if not info.converged:
        raise NumericError(f"derivative root search failed in [{a}, {b}]")
    return MinimizerResult(root, pi_hat(model, root, alpha, T, init), (a, b), evaluations + info.function_calls)


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float) -> tuple[float, float, int]:
    """Minimise a unimodal ``f`` on ``[a, b]`` to interval width ``tol``."""
    c = b - PHI * (b - a)
    d = a + PHI * (b - a)
    fc, fd = f(c), f(d)
    n = 2
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + PHI * (b - a)
            fd = f(d)
        n += 1
    x, fx = (c, fc) if fc <= fd else (d, fd)
    return x, fx, n


def second_differences(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[2:] - 2.0 * v[1:-1] + v[:-2]


class SAAObjective:
    """Sample-average ``Pi_T`` built on one fixed set of input paths.

    Every call regenerates the same paths from the configured seed, so the
    objective is a deterministic function of ``mu``.
    """

    def __init__(self, model: InputModel, alpha: float, T: float, init: InitialState, cfg: SimConfig):
        check_alpha(alpha)
        self.model, self.alpha, self.T, self.init, self.cfg = model, alpha, T, init, cfg
        self.calls = 0

    def __call__(self, mus) -> np.ndarray:
        mus = np.atleast_1d(np.asarray(mus, dtype=float))
        self.calls += 1
        integrals = simulate_integrals(self.model, mus, self.T, self.init, self.cfg)
        means = np.array([math.fsum(row) / row.size for row in integrals])
        return means / self.T + self.alpha * mus

    def convexity_tolerance(self, values: np.ndarray) -> float:
        if self.model.is_brownian:
            return 5.0 * self.cfg.step_for(self.T)
        return 1e-9 * max(1.0, float(np.max(np.abs(values))))

    def check_convexity(self, grid) -> np.ndarray:
        """Evaluate on ``grid``; raise :class:`ConvexityError` on a negative second difference."""
        values = self(grid)
        dd = second_differences(values)
        tol = self.convexity_tolerance(values)
        if dd.size and dd.min() < -tol:
            raise ConvexityError(f"SAA objective not convex: second difference {dd.min():.3e} < -{tol:.1e}")
        return values


def minimize_pi_T(
    model: InputModel,
    alpha: float,
    T: float,
    init: InitialState,
    cfg: SimConfig,
    tol: float = 1e-3,
    method: str = "auto",
    grid_points: int = 21,
) -> MinimizerResult:
    """Minimiser of the finite-horizon cost over ``mu >= 0``.

    ``method='saa'`` fixes the simulated input paths and runs golden-section
    search on the resulting convex objective; ``method='rbm'`` uses the
    noise-free RBM evaluator.  ``'auto'`` picks ``rbm`` for Brownian input
    with a deterministic start.
    """
    check_alpha(alpha)
    if method == "auto":
        method = "rbm" if model.is_brownian and init.is_deterministic else "saa"
    hi = search_upper(model, alpha)
    grid = np.linspace(0.0, hi, grid_points)
    if method == "rbm":
        f = lambda mu: rbm_pi_T(model, mu, alpha, T, init.value)  # noqa: E731
        values = np.array([f(mu) for mu in grid])
        calls = grid.size
    elif method == "saa":
        obj = SAAObjective(model, alpha, T, init, cfg)
        values = obj.check_convexity(grid)
        f = lambda mu: float(obj([mu])[0])  # noqa: E731
        calls = grid.size
    else:
        raise ParameterError(f"unknown method {method!r}")
    i = int(np.argmin(values))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    mu, fmu, n = golden_section(f, a, b, tol)
    if values[i] < fmu:
        mu, fmu = grid[i], values[i]
    interior = 0 < mu < hi
    return MinimizerResult(float(mu), float(fmu), (float(a), float(b)), calls + n, interior)


def compare_staffing(
    model: InputModel,
    alpha: float,
    T: float,
    init: InitialState,
    cfg: SimConfig,
    method: str = "auto",
) -> StaffingComparison:
    """True finite-horizon costs of ``mu_star_inf`` and the corrected rule.

    Monte-Carlo evaluations of the two speeds share input paths.  Brownian
    input with a deterministic start is evaluated without noise by default.
    """
    mu_inf = mu_star_infinity(model, alpha)
    mu_tilde = corrected_mu(model, alpha, T, init)
    if method == "auto":
        method = "rbm" if model.is_brownian and init.is_deterministic else "mc"
    if method == "rbm":
        est = [
            CostEstimate(rbm_pi_T(model, mu, alpha, T, init.value), 0.0, 0, cfg.master_seed)
            for mu in (mu_inf, mu_tilde)
        ]
    elif method == "mc":
        cts = estimate_CT_many(model, [mu_inf, mu_tilde], T, init, cfg)
        est = [ct.shifted(alpha * mu) for ct, mu in zip(cts, (mu_inf, mu_tilde))]
    else:
        raise ParameterError(f"unknown method {method!r}")
    reduction = (est[0].mean - est[1].mean) / est[0].mean
    return StaffingComparison(mu_inf, est[0], mu_tilde, est[1], reduction)


def optimality_gap(
    model: InputModel,
    alpha: float,
    T_list,
    init: InitialState,
    objective: str = "proxy",
    cfg: SimConfig | None = None,
) -> list[tuple[float, float, float]]:
    """Rows ``(T, gap, gap*T^2)`` of the cost of staffing at ``mu_star_inf``.

    ``objective='proxy'`` measures the gap on the corrected cost
    ``Pi_hat_T``; for short horizons that function has no interior minimum
    and the row carries ``nan``.  ``objective='exact'`` measures it on the
    true ``Pi_T``: noise-free for Brownian input, SAA with common random
    numbers otherwise (``cfg`` required).
    """
    if not init.is_deterministic:
        raise ParameterError("optimality gap is evaluated for deterministic starts")
    mu_inf = mu_star_infinity(model, alpha)
    rows = []
    for T in T_list:
        if objective == "proxy":
            res = minimize_pi_hat(model, alpha, T, init)
            if not res.interior:
                rows.append((float(T), math.nan, math.nan))
                continue
            at_inf = pi_hat(model, mu_inf, alpha, T, init)
        elif objective == "exact":
            at_inf, res = _exact_gap_terms(model, alpha, T, init, cfg, mu_inf)
        else:
            raise ParameterError(f"unknown objective {objective!r}")
        gap = at_inf - res.pi_star
        if gap < -1e-12 * max(1.0, abs(at_inf)):
            raise LevyQueueError(f"negative optimality gap {gap} at T={T}")
        gap = max(gap, 0.0)
        rows.append((float(T), gap, gap * T * T))
    return rows


def _exact_gap_terms(model, alpha, T, init, cfg, mu_inf):
    if model.is_brownian:
        f = lambda mu: rbm_pi_T(model, mu, alpha, T, init.value)  # noqa: E731
    else:
        if cfg is None:
            raise ParameterError("exact gap for compound-Poisson input needs a SimConfig")
        obj = SAAObjective(model, alpha, T, init, cfg)
        f = lambda mu: float(obj([mu])[0])  # noqa: E731
    # the finite-horizon optimum lies within a few mu_bullet/T of mu_star_inf
    width = max(0.5, 4.0 * abs(mu_bullet(model, alpha, init)) / T)
    a, b = max(0.0, mu_inf - width), mu_inf + width
    mu, fmu, n = golden_section(f, a, b, 1e-6)
    return f(mu_inf), MinimizerResult(mu, fmu, (a, b), n + 1)
