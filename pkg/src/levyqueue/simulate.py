"""Monte-Carlo engine for the reflected workload process.

Compound-Poisson paths are simulated event by event and integrated exactly:
between arrivals the workload drains linearly and the area under it is a
trapezoid or a triangle.  Brownian paths are sampled on a grid of step ``h``;
the running infimum of the net input over each step is drawn from the
Brownian-bridge minimum law, so workload values at grid points have the exact
reflected law and only the time integral is discretised.

Every routine is vectorised over a vector of server speeds that share one set
of input paths (common random numbers).  Replications are split into blocks
of fixed size; block ``b`` draws from a Philox stream keyed by
``(master_seed, b)``, so results never depend on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .correction import InitialState
from .errors import ConfigError, ParameterError
from .model import InputModel
from .stationary import check_stable

__all__ = [
    "BLOCK_SIZE",
    "SimConfig",
    "PathSummary",
    "CostEstimate",
    "CoupledSummary",
    "block_stream",
    "default_bm_step",
    "simulate_path",
    "simulate_integrals",
    "estimate_CT",
    "estimate_CT_many",
    "estimate_pi_T",
    "coupled_difference",
    "sample_first_passage",
    "sample_first_passages",
    "transient_mean_curve",
    "summarize",
]

BLOCK_SIZE = 8192


@dataclass(frozen=True)
class SimConfig:
    replications: int = 100_000
    master_seed: int = 20240601
    bm_step: float | None = None
    ci_level: float = 0.95
    jobs: int = 1

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 2:
            raise ConfigError(f"need at least 2 replications, got {self.replications!r}")
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit non-negative integer")
        if self.bm_step is not None and not self.bm_step > 0:
            raise ConfigError("bm_step must be positive")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level must lie in (0, 1)")
        if int(self.jobs) != self.jobs or self.jobs < 1:
            raise ConfigError("jobs must be a positive integer")

    def step_for(self, T: float) -> float:
        return self.bm_step if self.bm_step is not None else default_bm_step(T)


@dataclass(frozen=True)
class PathSummary:
    integral_Q: float
    final_Q: float
    first_empty_time: float | None


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    half_width: float
    replications: int
    seed: int

    def shifted(self, offset: float) -> "CostEstimate":
        return CostEstimate(self.mean + offset, self.half_width, self.replications, self.seed)


@dataclass(frozen=True)
class CoupledSummary:
    """Difference ``Y = Q^x - Q^y`` of two queues fed by one input path.

    ``times``/``values`` are the breakpoints of the piecewise-linear ``Y``
    (grid points for Brownian input).
    """

    tau_y: float | None
    tau_x: float | None
    integral_Y: float
    monotone: bool
    regimes_ok: bool
    times: np.ndarray
    values: np.ndarray


def default_bm_step(T: float) -> float:
    return 1e-3 * min(1.0, T)


def block_stream(master_seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for replication block ``block``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _block_sizes(replications: int) -> list[int]:
    full, rest = divmod(int(replications), BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _run_blocks(cfg: SimConfig, fn: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
    sizes = _block_sizes(cfg.replications)

    def work(b):
        return fn(block_stream(cfg.master_seed, b), sizes[b])

    if cfg.jobs > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(b) for b in range(len(sizes))]
    return np.concatenate(parts, axis=-1)


def summarize(values: np.ndarray, ci_level: float, seed: int) -> CostEstimate:
    """Sample mean with a normal-approximation confidence half-width."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    mean = math.fsum(v) / n
    var = math.fsum((v - mean) ** 2) / (n - 1)
    z = stats.norm.ppf(0.5 + 0.5 * ci_level)
    return CostEstimate(mean, z * math.sqrt(var / n), n, seed)


# --------------------------------------------------------------------------
# path kernels; arrays have shape (n_mu, n_paths)


def _cp_segment(model: InputModel, mus: np.ndarray, T: float, q0: np.ndarray, rng):
    k, n = q0.shape
    mu = mus[:, None]
    safe_mu = np.where(mu > 0, mu, 1.0)
    q = q0.copy()
    integral = np.zeros((k, n))
    first_empty = np.where(q0 <= 0, 0.0, np.nan)
    t = np.zeros(n)
    idx = np.arange(n)
    while idx.size:
        m = idx.size
        gaps = rng.standard_exponential(m) / model.lam
        jumps = model.sample_jumps(rng, m)
        t_now = t[idx]
        t_next = t_now + gaps
        dt = np.minimum(t_next, T) - t_now
        qa = q[:, idx]
        drain = mu * dt
        empties = qa <= drain
        area = np.where(empties, 0.5 * qa * qa / safe_mu, qa * dt - 0.5 * mu * dt * dt)
        integral[:, idx] += area
        fe = first_empty[:, idx]
        newly = empties & np.isnan(fe)
        fe = np.where(newly, t_now + qa / safe_mu, fe)
        first_empty[:, idx] = fe
        qa = np.maximum(qa - drain, 0.0)
        arrive = t_next < T
        qa = qa + np.where(arrive, jumps, 0.0)
        q[:, idx] = qa
        t[idx] = np.where(arrive, t_next, T)
        idx = idx[arrive]
    return integral, q, first_empty


def _bridge_min(xa, xb, s2h, u):
    # minimum of a Brownian bridge from xa to xb with variance s2h over the step
    d = xb - xa
    return 0.5 * (xa + xb - np.sqrt(d * d - 2.0 * s2h * np.log1p(-u)))


def _bm_segment(model: InputModel, mus: np.ndarray, T: float, q0: np.ndarray, rng, h: float):
    k, n = q0.shape
    mu = mus[:, None]
    nsteps = max(1, math.ceil(T / h - 1e-9))
    hh = T / nsteps
    s2h = model.lam * model.sigma2 * hh
    sd = math.sqrt(s2h)
    g = np.zeros(n)
    xa = np.zeros((k, n))
    runmin = np.zeros((k, n))
    q = q0.copy()
    integral = np.zeros((k, n))
    first_empty = np.where(q0 <= 0, 0.0, np.nan)
    pending = np.isnan(first_empty)
    for j in range(nsteps):
        z = rng.standard_normal(n)
        u = rng.random(n)
        g = g + model.lam * hh + sd * z
        xb = g - mu * ((j + 1) * hh)
        m = _bridge_min(xa, xb, s2h, u)
        np.minimum(runmin, m, out=runmin)
        qn = xb + np.maximum(q0, -runmin)
        integral += 0.5 * hh * (q + qn)
        if pending.any():
            hit = pending & (q0 + m <= 0)
            if hit.any():
                first_empty[hit] = (j + 0.5) * hh
                pending &= ~hit
        q = qn
        xa = xb
    return integral, q, first_empty


def _segment(model, mus, T, q0, rng, h):
    if model.is_brownian:
        return _bm_segment(model, mus, T, q0, rng, h)
    return _cp_segment(model, mus, T, q0, rng)


def _initial_workloads(model, mus, init: InitialState, n: int, rng, h: float) -> np.ndarray:
    k = len(mus)
    if init.variant == "deterministic":
        return np.full((k, n), init.value)
    if init.variant == "exponential":
        return np.broadcast_to(rng.exponential(init.value, n), (k, n)).copy()
    if init.variant == "warmup":
        _, qb, _ = _segment(model, mus, init.value, np.zeros((k, n)), rng, h)
        return qb
    raise ParameterError("an initial state given only by its moments cannot be simulated")


def _check_mus(mus) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(mus, dtype=float))
    if arr.ndim != 1 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ParameterError("server speeds must be finite and non-negative")
    return arr


def simulate_path(
    model: InputModel,
    mu: float,
    T: float,
    init: InitialState,
    stream: np.random.Generator,
    h: float | None = None,
) -> PathSummary:
    """One workload path on ``[0, T]``."""
    if not T > 0:
        raise ParameterError("T must be positive")
    mus = _check_mus([mu])
    h = default_bm_step(T) if h is None else h
    q0 = _initial_workloads(model, mus, init, 1, stream, h)
    integral, qT, fe = _segment(model, mus, T, q0, stream, h)
    first = float(fe[0, 0])
    return PathSummary(float(integral[0, 0]), float(qT[0, 0]), None if math.isnan(first) else first)


def simulate_integrals(
    model: InputModel,
    mus: Sequence[float],
    T: float,
    init: InitialState,
    cfg: SimConfig,
) -> np.ndarray:
    """Per-replication ``int_0^T Q_mu dt`` for every speed, shape ``(len(mus), R)``.

    All speeds see the same input paths and initial draws.
    """
    if not T > 0:
        raise ParameterError("T must be positive")
    mus = _check_mus(mus)
    h = cfg.step_for(T)

    def fn(rng, n):
        q0 = _initial_workloads(model, mus, init, n, rng, h)
        return _segment(model, mus, T, q0, rng, h)[0]

    return _run_blocks(cfg, fn)


def estimate_CT_many(
    model: InputModel,
    mus: Sequence[float],
    T: float,
    init: InitialState,
    cfg: SimConfig,
) -> list[CostEstimate]:
    integrals = simulate_integrals(model, mus, T, init, cfg)
    return [summarize(row / T, cfg.ci_level, cfg.master_seed) for row in integrals]


def estimate_CT(model: InputModel, mu: float, T: float, init: InitialState, cfg: SimConfig) -> CostEstimate:
    """Monte-Carlo estimate of ``C_T(mu) = (1/T) int_0^T E[Q_mu(t)] dt``."""
    return estimate_CT_many(model, [mu], T, init, cfg)[0]


def estimate_pi_T(
    model: InputModel, mu: float, alpha: float, T: float, init: InitialState, cfg: SimConfig
) -> CostEstimate:
    return estimate_CT(model, mu, T, init, cfg).shifted(alpha * mu)


# --------------------------------------------------------------------------
# coupling


def coupled_difference(
    model: InputModel,
    mu: float,
    T: float,
    x: float,
    y: float,
    stream: np.random.Generator,
    h: float = 1e-3,
) -> CoupledSummary:
    """Drive queues started at ``x >= y`` with one net-input path.

    ``T`` may be ``math.inf``, in which case the path is followed until the
    larger queue empties (requires ``mu > lambda``).
    """
    if y < 0 or x < y:
        raise ParameterError(f"need x >= y >= 0, got x={x}, y={y}")
    if not T > 0:
        raise ParameterError("T must be positive")
    if math.isinf(T):
        check_stable(model, mu)
    if model.is_brownian:
        return _coupled_bm(model, mu, T, x, y, stream, h)
    return _coupled_cp(model, mu, T, x, y, stream)


def _coupled_cp(model, mu, T, x, y, stream) -> CoupledSummary:
    tol = 1e-9 * max(1.0, x)
    t = 0.0
    qx, qy = float(x), float(y)
    xnet = 0.0  # X(t)
    inf_x = 0.0  # inf_{s<=t} X(s)
    tau_y = 0.0 if y == 0 else None
    tau_x = 0.0 if x == 0 else None
    times = [0.0]
    values = [x - y]
    expected = [x - y]
    area = 0.0
    while t < T and tau_x is None:
        gap = stream.standard_exponential() / model.lam
        jump = float(model.sample_jumps(stream, 1)[0])
        end = min(t + gap, T)
        dt = end - t
        events = []
        for label, q in (("y", qy), ("x", qx)):
            if q > 0 and q <= mu * dt:
                events.append((t + q / mu, label))
        area += _drain_area(qx, mu, dt) - _drain_area(qy, mu, dt)
        for te, label in sorted(events):
            xs = xnet - mu * (te - t)
            if label == "y" and tau_y is None:
                tau_y = te
            if label == "x":
                tau_x = te
            times.append(te)
            values.append(max(qx - mu * (te - t), 0.0) - max(qy - mu * (te - t), 0.0))
            expected.append(_regime_value(te, x, y, tau_y, tau_x, min(inf_x, xs)))
        qx = max(qx - mu * dt, 0.0)
        qy = max(qy - mu * dt, 0.0)
        xnet -= mu * dt
        inf_x = min(inf_x, xnet)
        times.append(end)
        values.append(qx - qy)
        expected.append(_regime_value(end, x, y, tau_y, tau_x, inf_x))
        if t + gap < T:
            qx += jump
            qy += jump
            xnet += jump
        t = end
    times_a = np.asarray(times)
    vals = np.asarray(values)
    monotone = bool(np.all(np.diff(vals) <= tol)) and bool(np.all((vals >= -tol) & (vals <= x - y + tol)))
    regimes_ok = bool(np.all(np.abs(vals - np.asarray(expected)) <= tol))
    return CoupledSummary(tau_y, tau_x, area, monotone, regimes_ok, times_a, vals)


def _drain_area(q, mu, dt):
    if q <= mu * dt:
        return 0.5 * q * q / mu if mu > 0 else 0.0
    return q * dt - 0.5 * mu * dt * dt


def _regime_value(t, x, y, tau_y, tau_x, inf_x):
    if tau_x is not None and t >= tau_x:
        return 0.0
    if tau_y is None or t < tau_y:
        return x - y
    return x + inf_x


def _coupled_bm(model, mu, T, x, y, stream, h) -> CoupledSummary:
    tol = 1e-9 * max(1.0, x)
    s2h = model.lam * model.sigma2 * h
    sd = math.sqrt(s2h)
    xa = 0.0
    runmin = 0.0
    t = 0.0
    tau_y = 0.0 if y == 0 else None
    tau_x = 0.0 if x == 0 else None
    times = [0.0]
    values = [x - y]
    expected = [x - y]
    area = 0.0
    prev = x - y
    while t < T and tau_x is None:
        step = min(h, T - t)
        s2 = s2h * step / h
        xb = xa + (model.lam - mu) * step + sd * math.sqrt(step / h) * stream.standard_normal()
        m = float(_bridge_min(xa, xb, s2, stream.random()))
        runmin = min(runmin, m)
        if tau_y is None and y + runmin <= 0:
            tau_y = t + 0.5 * step
        if x + runmin <= 0:
            tau_x = t + 0.5 * step
        t += step
        val = max(x, -runmin) - max(y, -runmin)
        area += 0.5 * step * (prev + val)
        prev = val
        times.append(t)
        values.append(val)
        expected.append(_regime_value(t, x, y, tau_y, tau_x, runmin) if tau_x is None else 0.0)
        xa = xb
    vals = np.asarray(values)
    monotone = bool(np.all(np.diff(vals) <= tol)) and bool(np.all((vals >= -tol) & (vals <= x - y + tol)))
    regimes_ok = bool(np.all(np.abs(vals - np.asarray(expected)) <= tol))
    return CoupledSummary(tau_y, tau_x, area, monotone, regimes_ok, np.asarray(times), vals)


# --------------------------------------------------------------------------
# first passage to zero


def sample_first_passages(
    model: InputModel,
    mu: float,
    x: float,
    n: int,
    rng: np.random.Generator,
    cap: float | None = None,
    h: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray]:
    """``n`` draws of the emptying time from ``x``; returns ``(times, censored)``.

    Censored draws (passage beyond ``cap``) carry ``nan`` in ``times``.
    """
    if x < 0:
        raise ParameterError("x must be non-negative")
    d = check_stable(model, mu)
    if cap is None:
        cap = 1e3 * max(x, 1e-12) / d
    if not cap > 0:
        raise ParameterError("cap must be positive")
    times = np.full(n, np.nan)
    censored = np.zeros(n, dtype=bool)
    if x == 0:
        times[:] = 0.0
        return times, censored
    if model.is_brownian:
        _bm_passage(model, mu, x, rng, cap, h, times, censored)
    else:
        _cp_passage(model, mu, x, rng, cap, times, censored)
    return times, censored


def _cp_passage(model, mu, x, rng, cap, times, censored):
    n = times.size
    q = np.full(n, float(x))
    t = np.zeros(n)
    idx = np.arange(n)
    while idx.size:
        m = idx.size
        gaps = rng.standard_exponential(m) / model.lam
        jumps = model.sample_jumps(rng, m)
        qa, ta = q[idx], t[idx]
        hit = qa <= mu * gaps
        th = ta + qa / mu
        ok = hit & (th <= cap)
        times[idx[ok]] = th[ok]
        tn = ta + gaps
        cens = (hit & (th > cap)) | (~hit & (tn > cap))
        censored[idx[cens]] = True
        cont = ~hit & ~cens
        q[idx[cont]] = qa[cont] - mu * gaps[cont] + jumps[cont]
        t[idx[cont]] = tn[cont]
        idx = idx[cont]


def _bm_passage(model, mu, x, rng, cap, h, times, censored):
    n = times.size
    s2h = model.lam * model.sigma2 * h
    sd = math.sqrt(s2h)
    drift = (model.lam - mu) * h
    xa = np.zeros(n)
    idx = np.arange(n)
    j = 0
    while idx.size:
        m = idx.size
        xb = xa + drift + sd * rng.standard_normal(m)
        mn = _bridge_min(xa, xb, s2h, rng.random(m))
        hit = x + mn <= 0
        times[idx[hit]] = (j + 0.5) * h
        j += 1
        keep = ~hit
        if j * h >= cap:
            censored[idx[keep]] = True
            break
        idx = idx[keep]
        xa = xb[keep]


def sample_first_passage(
    model: InputModel,
    mu: float,
    x: float,
    stream: np.random.Generator,
    cap: float | None = None,
    h: float = 1e-3,
) -> float | None:
    """Single emptying time from ``x``; ``None`` when censored at ``cap``."""
    times, censored = sample_first_passages(model, mu, x, 1, stream, cap, h)
    return None if censored[0] else float(times[0])


# --------------------------------------------------------------------------


def transient_mean_curve(
    model: InputModel,
    mu: float,
    t_grid: Sequence[float],
    init: InitialState,
    cfg: SimConfig,
) -> list[CostEstimate]:
    """Estimates of ``E[Q_mu(t)]`` on ``t_grid`` from common replications."""
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ParameterError("t_grid must be a non-empty increasing list of positive times")
    mus = _check_mus([mu])
    h = cfg.step_for(float(grid[-1]))

    def fn(rng, n):
        q = _initial_workloads(model, mus, init, n, rng, h)
        out = np.empty((grid.size, n))
        prev = 0.0
        for i, t in enumerate(grid):
            _, q, _ = _segment(model, mus, t - prev, q, rng, h)
            out[i] = q[0]
            prev = t
        return out

    values = _run_blocks(cfg, fn)
    return [summarize(row, cfg.ci_level, cfg.master_seed) for row in values]
