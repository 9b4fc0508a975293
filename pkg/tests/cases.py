"""Random instances of the four cost functions for property tests.

Each case exposes the cost as a function of a flat decision vector, its
subgradient, the box the decision lives in, and the arguments of every max
term so tests can tell kinks from differentiable points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from zehplan import kernels

from conftest import random_scenarios, random_tariff

KINDS = ("individual", "global", "user", "manager")


@dataclass
class Case:
    kind: str
    lower: np.ndarray
    upper: np.ndarray
    cost: Callable
    oracle: Callable
    kink_args: Callable
    cost_many: Callable
    kinks: list

    def sample(self, rng, m: int = 1) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(m, self.lower.size))


def make_case(kind: str, rng: np.random.Generator, N: int = 8, T: int = 4, n: int = 2) -> Case:
    if kind == "individual":
        scen = random_scenarios(rng, N, 1, T, zero_y=0.2)
        tariff = random_tariff(rng)
        beta = rng.uniform(0, 1, T)
        x, y = scen.x[:, 0], scen.y[:, 0]

        def cost(p):
            return kernels.individual_cost(p[0], p[1], scen, tariff, beta).total

        def oracle(p):
            bd, g = kernels.individual_oracle(p[0], p[1], scen, tariff, beta)
            return bd.total, g

        def kink_args(p):
            return np.concatenate([(x - p[0] * y - beta * p[1]).ravel(), (p[0] * y - x - (1 - beta) * p[1]).ravel()])

        def many(P):
            return kernels.individual_cost_many(P, scen, tariff, beta)

        kinks = [np.array([min(x[j, t] / y[j, t], 40.0), 0.0]) for j, t in _cells(rng, y)]
        return Case(kind, np.zeros(2), np.array([40.0, 30.0]), cost, oracle, kink_args, many, kinks)

    if kind == "global":
        scen = random_scenarios(rng, N, n, T, zero_y=0.2)
        tariff = random_tariff(rng)
        beta = rng.uniform(0, 1, (n, T))
        x, y = scen.x, scen.y

        def cost(p):
            return kernels.global_cost(p[:n], p[n], scen, tariff, beta).total

        def oracle(p):
            bd, g = kernels.global_oracle(p[:n], p[n], scen, tariff, beta)
            return bd.total, g

        def kink_args(p):
            s = (x - p[:n, None] * y).sum(1)
            return np.concatenate([(s - beta.sum(0) * p[n]).ravel(), (-s - (n - beta.sum(0)) * p[n]).ravel()])

        def many(P):
            return kernels.global_cost_many(P, scen, tariff, beta)

        kinks = []
        for j, t in _cells(rng, x[:, 0]):
            a = rng.uniform(0, 40, n)
            gap = (x[j, :, t] - a * y[j, :, t]).sum()
            if gap > 0:
                kinks.append(np.r_[a, min(gap / beta[:, t].sum(), 30.0 * n)])
        return Case(kind, np.zeros(n + 1), np.r_[np.full(n, 40.0), 30.0 * n], cost, oracle, kink_args, many, kinks)

    if kind == "user":
        scen = random_scenarios(rng, N, 1, T, zero_y=0.2)
        tariff = random_tariff(rng, game=True)
        c_alloc = rng.uniform(0, 10)
        x, y = scen.x[:, 0], scen.y[:, 0]

        def cost(p):
            return kernels.user_cost(p[0], c_alloc, scen, tariff).total

        def oracle(p):
            bd, g = kernels.user_oracle(p[0], c_alloc, scen, tariff)
            return bd.total, g

        def kink_args(p):
            s = x - p[0] * y
            return np.concatenate([s.ravel(), (s - c_alloc).ravel()])

        def many(P):
            return kernels.user_cost_many(P[:, 0], c_alloc, scen, tariff)

        kinks = [np.array([min(x[j, t] / y[j, t], 40.0)]) for j, t in _cells(rng, y)]
        kinks += [np.array([min(max(x[j, t] - c_alloc, 0.0) / y[j, t], 40.0)]) for j, t in _cells(rng, y)]
        return Case(kind, np.zeros(1), np.array([40.0]), cost, oracle, kink_args, many, kinks)

    if kind == "manager":
        scen = random_scenarios(rng, N, n, T, zero_y=0.2)
        tariff = random_tariff(rng, game=True)
        beta_a = rng.uniform(0, 1, T)
        a = rng.uniform(0, 40, n)
        x, y = scen.x, scen.y
        s = x - a[None, :, None] * y

        def cost(p):
            return kernels.manager_cost(p, a, scen, tariff, beta_a).total

        def oracle(p):
            bd, g = kernels.manager_oracle(p, a, scen, tariff, beta_a)
            return bd.total, g

        def kink_args(p):
            short = np.maximum(s, 0)
            p_in = np.maximum(-s, 0).sum(1)
            p_out = np.minimum(short, p[None, :, None]).sum(1)
            C = p.sum()
            return np.concatenate(
                [
                    (short - p[None, :, None]).ravel(),
                    (p_out - p_in - beta_a * C).ravel(),
                    (p_in - p_out - (1 - beta_a) * C).ravel(),
                ]
            )

        def many(P):
            return kernels.manager_cost_many(P, a, scen, tariff, beta_a)

        kinks = []
        for j, t in _cells(rng, x[:, 0]):
            c = rng.uniform(0, 20, n)
            i = rng.integers(n)
            c[i] = min(max(s[j, i, t], 0.0), 20.0)
            kinks.append(c)
        return Case(kind, np.zeros(n), np.full(n, 20.0), cost, oracle, kink_args, many, kinks)

    raise ValueError(kind)


def _cells(rng, y, count: int = 5) -> list:
    """Random (sample, day) cells with nonzero generation."""
    cells = np.argwhere(y > 0)
    if len(cells) == 0:
        return []
    pick = rng.choice(len(cells), size=min(count, len(cells)), replace=False)
    return [tuple(cells[k]) for k in pick]


def midpoint_violations(case: Case, rng, pairs: int) -> int:
    P = case.sample(rng, pairs)
    Q = case.sample(rng, pairs)
    fp, fq, fm = case.cost_many(P), case.cost_many(Q), case.cost_many((P + Q) / 2)
    slack = 1e-9 * (1 + np.abs(fp) + np.abs(fq))
    return int(np.sum(fm > (fp + fq) / 2 + slack))


def hyperplane_violations(case: Case, rng, points: int, base_points: int = 10, at_kinks: bool = True) -> int:
    """Check f(y) >= f(x) + g.(y - x) at ``points`` random y for each of several x."""
    bad = 0
    bases = list(case.sample(rng, base_points))
    if at_kinks:
        bases += kink_points(case, rng, base_points) + case.kinks
    for x in bases:
        f, g = case.oracle(x)
        Y = case.sample(rng, points)
        fy = case.cost_many(Y)
        bad += int(np.sum(fy < f + (Y - x) @ g - 1e-9 * (1 + abs(f))))
    return bad


def kink_points(case: Case, rng, count: int) -> list:
    """Points that sit exactly on a kink: box corners, faces and zero decisions."""
    d = case.lower.size
    pts = [case.lower.copy(), case.upper.copy()]
    for _ in range(count):
        p = case.sample(rng)[0]
        k = rng.integers(d)
        p[k] = case.lower[k] if rng.random() < 0.5 else case.upper[k]
        pts.append(p)
    return pts


def finite_difference_mismatches(case: Case, rng, points: int, h: float = 1e-4, margin: float = 1e-3) -> tuple:
    """Central differences against the subgradient at points away from every kink.

    A point qualifies when every max argument is at least ``margin`` from zero
    and stays on the same side for steps of size ``h``. Returns
    (mismatches, points checked).
    """
    d = case.lower.size
    checked = bad = 0
    for p in case.sample(rng, points):
        p = np.clip(p, case.lower + 2 * h, case.upper - 2 * h)
        base = case.kink_args(p)
        if np.min(np.abs(base)) < margin:
            continue
        steps = [p + h * e for e in np.eye(d)] + [p - h * e for e in np.eye(d)]
        if any(np.any(np.sign(case.kink_args(q)) != np.sign(base)) for q in steps):
            continue
        _, g = case.oracle(p)
        fd = np.array([(case.cost(p + h * e) - case.cost(p - h * e)) / (2 * h) for e in np.eye(d)])
        checked += 1
        if np.any(np.abs(fd - g) > 1e-5 * np.maximum(1.0, np.abs(g))):
            bad += 1
    return bad, checked
