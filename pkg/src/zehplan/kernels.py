"""Sample-average costs and subgradients of the four planning objectives.

Every stochastic term is an average over scenario samples of a per-sample
sum over days. The ``*_terms`` helpers are written for a batch of M decision
points so that a single code path serves both the solvers (M = 1, with
subgradients) and exhaustive scans (large M, values only).

Kink convention: a ``max{z, 0}`` term counts as active when ``z >= 0``; a
``min{s, c}`` term follows ``s`` only when ``s > c`` strictly. Both choices
give valid subgradients of the convex objectives.
"""

from __future__ import annotations

import numpy as np

from .model import CostBreakdown, ScenarioSet, Tariff
from .reduction import BLOCK_SIZE, sample_mean

# Bound on M * B * T elements per batched evaluation.
_BATCH_ELEMENTS = 4_000_000


def _user_block(scenarios: ScenarioSet) -> None:
    if scenarios.n_users != 1:
        raise ValueError(
            f"expected a single-user scenario view, got {scenarios.n_users} users "
            "(use scenarios.user(i))"
        )


def _days_vector(beta, n_days: int, name: str = "beta") -> np.ndarray:
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n_days,))
    if beta.size and (beta.min() < 0 or beta.max() > 1):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return beta


def _user_days(beta, n_users: int, n_days: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    try:
        beta = np.broadcast_to(beta if beta.ndim != 1 else beta[None, :], (n_users, n_days))
    except ValueError:
        raise ValueError(f"beta of shape {beta.shape} does not match (n={n_users}, T={n_days})")
    if beta.size and (beta.min() < 0 or beta.max() > 1):
        raise ValueError("beta entries must lie in [0, 1]")
    return beta


def _nonneg(*vals) -> None:
    for v in vals:
        if np.any(np.asarray(v) < 0):
            raise ValueError("decision variables must be nonnegative")


def _batched(points: np.ndarray, scenarios: ScenarioSet, fn, workers: int) -> np.ndarray:
    """Evaluate ``fn(chunk)`` (returns (K, m) term means) over point chunks."""
    per_point = max(1, min(scenarios.n_samples, BLOCK_SIZE) * max(1, scenarios.n_days) * scenarios.n_users)
    chunk = max(1, _BATCH_ELEMENTS // per_point)
    out = [fn(points[s : s + chunk]) for s in range(0, len(points), chunk)]
    return np.concatenate(out, axis=-1)


# ---------------------------------------------------------------------------
# Individual investment: user i owns PV area a and battery capacity c
# ---------------------------------------------------------------------------


def _individual_terms(a, c, x, y, beta, tariff: Tariff, grad: bool = False):
    """Per-sample (gas, rev[, d/da, d/dc]) for points a, c of shape (M,)."""
    a3, c3 = a[:, None, None], c[:, None, None]
    z_gas = x[None] - a3 * y[None] - c3 * beta
    z_rev = a3 * y[None] - x[None] - c3 * (1.0 - beta)
    gas = tariff.pi_gas * np.maximum(z_gas, 0.0).sum(-1)
    rev = tariff.pi_rev * np.maximum(z_rev, 0.0).sum(-1)
    if not grad:
        return np.stack([gas, rev])
    on_gas = z_gas >= 0
    on_rev = z_rev >= 0
    da = (tariff.pi_rev * on_rev - tariff.pi_gas * on_gas) * y[None]
    dc = -tariff.pi_gas * on_gas * beta - tariff.pi_rev * on_rev * (1.0 - beta)
    return np.stack([gas, rev, da.sum(-1), dc.sum(-1)])


def _individual_eval(a, c, scenarios, tariff, beta, grad, workers):
    _user_block(scenarios)
    beta = _days_vector(beta, scenarios.n_days)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    k = 4 if grad else 2
    return sample_mean(
        scenarios,
        lambda x, y: _individual_terms(a, c, x[:, 0], y[:, 0], beta, tariff, grad),
        (k, len(a)),
        workers,
    )


def individual_cost(a, c, scenarios: ScenarioSet, tariff: Tariff, beta=0.5, workers: int = 1) -> CostBreakdown:
    """Sample-average cost of one household investing ``a`` m^2 of PV and ``c`` kWh of storage."""
    _nonneg(a, c)
    gas, rev = _individual_eval(a, c, scenarios, tariff, beta, False, workers)[:, 0]
    return CostBreakdown(
        capital_pv=float(a) * tariff.pi_pv,
        capital_battery=float(c) * tariff.pi_b,
        gas=float(gas),
        reverse_flow=float(rev),
    )


def individual_oracle(a, c, scenarios, tariff, beta=0.5, workers: int = 1):
    """Return ``(CostBreakdown, subgradient)`` at (a, c) in one pass."""
    _nonneg(a, c)
    gas, rev, da, dc = _individual_eval(a, c, scenarios, tariff, beta, True, workers)[:, 0]
    cost = CostBreakdown(
        capital_pv=float(a) * tariff.pi_pv,
        capital_battery=float(c) * tariff.pi_b,
        gas=float(gas),
        reverse_flow=float(rev),
    )
    return cost, np.array([tariff.pi_pv + da, tariff.pi_b + dc])


def individual_subgradient(a, c, scenarios, tariff, beta=0.5, workers: int = 1) -> np.ndarray:
    return individual_oracle(a, c, scenarios, tariff, beta, workers)[1]


def individual_cost_many(points, scenarios, tariff, beta=0.5, workers: int = 1) -> np.ndarray:
    """Total individual cost at each row (a, c) of ``points``."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    _nonneg(points)
    terms = _batched(
        points,
        scenarios,
        lambda p: _individual_eval(p[:, 0], p[:, 1], scenarios, tariff, beta, False, workers),
        workers,
    )
    return points[:, 0] * tariff.pi_pv + points[:, 1] * tariff.pi_b + terms[0] + terms[1]


# ---------------------------------------------------------------------------
# Global investment: one pooled battery of capacity c_total for n users
# ---------------------------------------------------------------------------


def _global_terms(a, c_total, x, y, beta, tariff: Tariff, grad: bool = False):
    """a: (M, n), c_total: (M,), x/y: (B, n, T), beta: (n, T)."""
    net = x.sum(1)[None] - np.einsum("mi,bit->mbt", a, y)
    beta_sum = beta.sum(0)
    c3 = c_total[:, None, None]
    z_gas = net - c3 * beta_sum
    z_rev = -net - c3 * (beta.shape[0] - beta_sum)
    gas = tariff.pi_gas * np.maximum(z_gas, 0.0).sum(-1)
    rev = tariff.pi_rev * np.maximum(z_rev, 0.0).sum(-1)
    if not grad:
        return np.stack([gas, rev])
    on_gas = (z_gas >= 0)[0]
    on_rev = (z_rev >= 0)[0]
    w = tariff.pi_rev * on_rev - tariff.pi_gas * on_gas  # (B, T)
    da = np.einsum("bt,bit->ib", w, y)
    dc = (-tariff.pi_gas * on_gas * beta_sum - tariff.pi_rev * on_rev * (beta.shape[0] - beta_sum)).sum(-1)
    return np.concatenate([np.stack([gas[0], rev[0]]), da, dc[None]])


def _global_eval(a, c_total, scenarios, tariff, beta, grad, workers):
    n, T = scenarios.n_users, scenarios.n_days
    beta = _user_days(beta, n, T)
    a = np.asarray(a, dtype=float).reshape(-1, n)
    c_total = np.atleast_1d(np.asarray(c_total, dtype=float))
    shape = (2 + n + 1,) if grad else (2, len(a))
    return sample_mean(
        scenarios,
        lambda x, y: _global_terms(a, c_total, x, y, beta, tariff, grad),
        shape,
        workers,
    )


def global_cost(a, c_total, scenarios: ScenarioSet, tariff: Tariff, beta=0.5, workers: int = 1) -> CostBreakdown:
    """Sample-average cost of the whole neighborhood pooling into one battery.

    Each user's charged fraction of the pooled capacity enters the pooled
    shortage and surplus sums separately.
    """
    a = np.asarray(a, dtype=float).reshape(scenarios.n_users)
    _nonneg(a, c_total)
    gas, rev = _global_eval(a, c_total, scenarios, tariff, beta, False, workers)[:, 0]
    return CostBreakdown(
        capital_pv=float(a.sum()) * tariff.pi_pv,
        capital_battery=float(c_total) * tariff.pi_b,
        gas=float(gas),
        reverse_flow=float(rev),
    )


def global_oracle(a, c_total, scenarios, tariff, beta=0.5, workers: int = 1):
    """Cost and subgradient w.r.t. (a_1, ..., a_n, c_total)."""
    n = scenarios.n_users
    a = np.asarray(a, dtype=float).reshape(n)
    _nonneg(a, c_total)
    vals = _global_eval(a, c_total, scenarios, tariff, beta, True, workers)
    cost = CostBreakdown(
        capital_pv=float(a.sum()) * tariff.pi_pv,
        capital_battery=float(c_total) * tariff.pi_b,
        gas=float(vals[0]),
        reverse_flow=float(vals[1]),
    )
    g = np.concatenate([tariff.pi_pv + vals[2 : 2 + n], [tariff.pi_b + vals[2 + n]]])
    return cost, g


def global_subgradient(a, c_total, scenarios, tariff, beta=0.5, workers: int = 1) -> np.ndarray:
    return global_oracle(a, c_total, scenarios, tariff, beta, workers)[1]


def global_cost_many(points, scenarios, tariff, beta=0.5, workers: int = 1) -> np.ndarray:
    """Total global cost at each row (a_1, ..., a_n, c_total) of ``points``."""
    n = scenarios.n_users
    points = np.asarray(points, dtype=float).reshape(-1, n + 1)
    _nonneg(points)
    terms = _batched(
        points,
        scenarios,
        lambda p: _global_eval(p[:, :n], p[:, n], scenarios, tariff, beta, False, workers),
        workers,
    )
    return points[:, :n].sum(1) * tariff.pi_pv + points[:, n] * tariff.pi_b + terms[0] + terms[1]


# ---------------------------------------------------------------------------
# Game, user side: PV area a given a daily purchase allowance c_alloc
# ---------------------------------------------------------------------------


def _user_terms(a, c_alloc, x, y, tariff: Tariff, grad: bool = False):
    """Per-sample (sale, purchase, gas[, d/da]) for a of shape (M,)."""
    s = x[None] - a[:, None, None] * y[None]
    sale = -tariff.pi_in * np.maximum(-s, 0.0).sum(-1)
    purchase = tariff.pi_out * np.minimum(np.maximum(s, 0.0), c_alloc).sum(-1)
    gas = tariff.pi_gas * np.maximum(s - c_alloc, 0.0).sum(-1)
    if not grad:
        return np.stack([sale, purchase, gas])
    slope = np.where(s >= c_alloc, tariff.pi_gas, np.where(s >= 0, tariff.pi_out, tariff.pi_in))
    da = (-slope * y[None]).sum(-1)
    return np.stack([sale, purchase, gas, da])


def _user_eval(a, c_alloc, scenarios, tariff, grad, workers):
    _user_block(scenarios)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    c_alloc = float(c_alloc)
    return sample_mean(
        scenarios,
        lambda x, y: _user_terms(a, c_alloc, x[:, 0], y[:, 0], tariff, grad),
        (4 if grad else 3, len(a)),
        workers,
    )


def user_cost(a, c_alloc, scenarios: ScenarioSet, tariff: Tariff, workers: int = 1) -> CostBreakdown:
    """Sample-average cost of a game user with PV area ``a`` and allowance ``c_alloc``.

    Surplus is sold to the manager at ``pi_in`` (a negative cost), shortage is
    bought from the manager up to ``c_alloc`` per day and the rest comes from
    the fuel cell.
    """
    _nonneg(a, c_alloc)
    sale, purchase, gas = _user_eval(a, c_alloc, scenarios, tariff, False, workers)[:, 0]
    return CostBreakdown(capital_pv=float(a) * tariff.pi_pv, sale=float(sale), purchase=float(purchase), gas=float(gas))


def user_oracle(a, c_alloc, scenarios, tariff, workers: int = 1):
    _nonneg(a, c_alloc)
    sale, purchase, gas, da = _user_eval(a, c_alloc, scenarios, tariff, True, workers)[:, 0]
    cost = CostBreakdown(capital_pv=float(a) * tariff.pi_pv, sale=float(sale), purchase=float(purchase), gas=float(gas))
    return cost, np.array([tariff.pi_pv + da])


def user_subgradient(a, c_alloc, scenarios, tariff, workers: int = 1) -> np.ndarray:
    return user_oracle(a, c_alloc, scenarios, tariff, workers)[1]


def user_cost_many(a_values, c_alloc, scenarios, tariff, workers: int = 1) -> np.ndarray:
    a_values = np.asarray(a_values, dtype=float).reshape(-1)
    _nonneg(a_values, c_alloc)
    terms = _batched(
        a_values,
        scenarios,
        lambda p: _user_eval(p, c_alloc, scenarios, tariff, False, workers),
        workers,
    )
    return a_values * tariff.pi_pv + terms.sum(0)


# ---------------------------------------------------------------------------
# Game, manager side: allowances c_alloc given the users' PV areas
# ---------------------------------------------------------------------------


def _manager_terms(c_alloc, a, x, y, beta_a, tariff: Tariff, grad: bool = False):
    """c_alloc: (M, n), a: (n,), x/y: (B, n, T), beta_a: (T,)."""
    s = x - a[None, :, None] * y
    p_in = np.maximum(-s, 0.0).sum(1)  # (B, T)
    short = np.maximum(s, 0.0)
    p_out = np.minimum(short[None], c_alloc[:, None, :, None]).sum(2)  # (M, B, T)
    cap = c_alloc.sum(1)[:, None, None]
    z_grid = p_out - p_in[None] - beta_a * cap
    z_rev = p_in[None] - p_out - (1.0 - beta_a) * cap
    exchange = (tariff.pi_in * p_in[None] - tariff.pi_out * p_out).sum(-1)
    grid = tariff.pi_grid * np.maximum(z_grid, 0.0).sum(-1)
    rev = tariff.pi_rev * np.maximum(z_rev, 0.0).sum(-1)
    if not grad:
        return np.stack([exchange, grid, rev])
    on_grid = (z_grid >= 0)[0]
    on_rev = (z_rev >= 0)[0]
    # P_out is concave in c_alloc and the outer terms are nonincreasing in P_out
    # whenever pi_out >= pi_grid, so any supergradient of P_out is admissible.
    d_pout = tariff.pi_grid * on_grid - tariff.pi_rev * on_rev - tariff.pi_out
    d_cap = -tariff.pi_grid * on_grid * beta_a - tariff.pi_rev * on_rev * (1.0 - beta_a)
    follows = short > c_alloc[0][None, :, None]  # (B, n, T)
    dc = np.einsum("bt,bit->ib", d_pout, follows.astype(float)) + d_cap.sum(-1)[None]
    return np.concatenate([np.stack([exchange[0], grid[0], rev[0]]), dc])


def _manager_eval(c_alloc, a, scenarios, tariff, beta_a, grad, workers):
    n, T = scenarios.n_users, scenarios.n_days
    beta_a = _days_vector(beta_a, T, "beta_a")
    c_alloc = np.asarray(c_alloc, dtype=float).reshape(-1, n)
    a = np.asarray(a, dtype=float).reshape(n)
    shape = (3 + n,) if grad else (3, len(c_alloc))
    return sample_mean(
        scenarios,
        lambda x, y: _manager_terms(c_alloc, a, x, y, beta_a, tariff, grad),
        shape,
        workers,
    )


def manager_cost(c_alloc, a, scenarios: ScenarioSet, tariff: Tariff, beta_a=0.5, workers: int = 1) -> CostBreakdown:
    """Sample-average cost of the storage manager.

    The manager buys every user's surplus, sells each user up to its
    allowance, covers any net deficit beyond the charged shared storage from
    the grid, and pays the reverse-flow penalty on net surplus beyond the
    free storage room.
    """
    c_alloc = np.asarray(c_alloc, dtype=float).reshape(scenarios.n_users)
    _nonneg(c_alloc, a)
    exchange, grid, rev = _manager_eval(c_alloc, a, scenarios, tariff, beta_a, False, workers)[:, 0]
    return CostBreakdown(
        capital_battery=float(c_alloc.sum()) * tariff.pi_b,
        exchange=float(exchange),
        grid=float(grid),
        reverse_flow=float(rev),
    )


def manager_oracle(c_alloc, a, scenarios, tariff, beta_a=0.5, workers: int = 1):
    c_alloc = np.asarray(c_alloc, dtype=float).reshape(scenarios.n_users)
    _nonneg(c_alloc, a)
    vals = _manager_eval(c_alloc, a, scenarios, tariff, beta_a, True, workers)
    cost = CostBreakdown(
        capital_battery=float(c_alloc.sum()) * tariff.pi_b,
        exchange=float(vals[0]),
        grid=float(vals[1]),
        reverse_flow=float(vals[2]),
    )
    return cost, tariff.pi_b + vals[3:]


def manager_subgradient(c_alloc, a, scenarios, tariff, beta_a=0.5, workers: int = 1) -> np.ndarray:
    return manager_oracle(c_alloc, a, scenarios, tariff, beta_a, workers)[1]


def manager_cost_many(points, a, scenarios, tariff, beta_a=0.5, workers: int = 1) -> np.ndarray:
    n = scenarios.n_users
    points = np.asarray(points, dtype=float).reshape(-1, n)
    _nonneg(points, a)
    terms = _batched(
        points,
        scenarios,
        lambda p: _manager_eval(p, a, scenarios, tariff, beta_a, False, workers),
        workers,
    )
    return points.sum(1) * tariff.pi_b + terms.sum(0)
