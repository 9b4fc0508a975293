"""Shared helpers for the test suite."""

from __future__ import annotations

import sys

import numpy as np
import pytest

from zehplan import Bounds, ScenarioSet, Tariff, bootstrap_scenarios, synthetic_neighborhood

# Capital prices are quoted per year of operation. Test horizons are a month,
# so the neighborhoods below charge the same per-day capital rate over 30
# days; otherwise investment is never worth it and every optimum sits at 0.
HORIZON_SCALE = 30 / 334
MONTH_TARIFF = Tariff(pi_pv=2000 * HORIZON_SCALE, pi_b=4500 * HORIZON_SCALE)


def make_scenarios(x, y, seed: int = 0) -> ScenarioSet:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return ScenarioSet(x, y, seed=seed, provenance="test")


def random_scenarios(rng: np.random.Generator, N: int, n: int, T: int, *, zero_y: float = 0.0) -> ScenarioSet:
    """Lognormal consumption and generation with occasional zero-generation days."""
    x = rng.lognormal(np.log(10.0), 0.5, size=(N, n, T))
    y = rng.lognormal(np.log(0.5), 0.6, size=(N, n, T))
    if zero_y:
        y[rng.random(y.shape) < zero_y] = 0.0
    return make_scenarios(x, y, seed=int(rng.integers(2**32)))


def random_tariff(rng: np.random.Generator, game: bool = False) -> Tariff:
    """Random prices; with ``game`` they satisfy pi_gas >= pi_out >= max(pi_in, pi_grid)."""
    pi_out = rng.uniform(5, 30)
    return Tariff(
        pi_gas=pi_out + rng.uniform(0, 20),
        pi_rev=rng.uniform(0, 30),
        pi_pv=rng.uniform(0, 300),
        pi_b=rng.uniform(0, 500),
        pi_in=rng.uniform(-10, pi_out) if game else rng.uniform(-10, 30),
        pi_out=pi_out,
        pi_grid=rng.uniform(0, pi_out),
    )


def neighborhood(seed: int, n: int = 5, T: int = 30, N: int = 500, window: int = 7):
    data = synthetic_neighborhood(n, T, seed=seed)
    scen = bootstrap_scenarios(data, N, T, window=window, seed=seed)
    return data, scen


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def single_sample():
    """One sample, one user, one day: X=10 kWh, Y=2 kWh/m2."""
    return make_scenarios([[[10.0]]], [[[2.0]]])


@pytest.fixture
def month_bounds():
    return Bounds.uniform(5, 40.0, 10.0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
