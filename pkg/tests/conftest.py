import math

import numpy as np
import pytest

from levyqueue.model import make_mm1, make_mpareto, make_rbm


@pytest.fixture
def mm1():
    return make_mm1(1.0)


@pytest.fixture
def pareto():
    return make_mpareto(1.0, 16 / 5, 11 / 16)


@pytest.fixture
def rbm():
    return make_rbm(1.0, 1.0)


def reference_cp_integrals(lam, mu, T, x, jumps, n, rng):
    """Plain event loop, one path at a time; deliberately shares no code with the package."""
    out = np.empty(n)
    for i in range(n):
        t, q, area = 0.0, x, 0.0
        while True:
            gap = rng.exponential(1.0 / lam)
            dt = min(gap, T - t)
            if q >= mu * dt:
                area += q * dt - 0.5 * mu * dt * dt
                q -= mu * dt
            elif mu > 0:
                area += 0.5 * q * q / mu
                q = 0.0
            t += dt
            if t >= T:
                break
            q += jumps(rng)
        out[i] = area
    return out


def mean_ci(values, z=1.959963984540054):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), z * float(v.std(ddof=1)) / math.sqrt(v.size)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion."""

    def record(number, passed, detail):
        _ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
