"""Best-response iteration for the shared-storage game and model comparison.

Users choose PV areas given the manager's daily allowances; the manager
chooses allowances given the PV areas. Rounds are Gauss-Seidel: every user
responds to the current allowances, then the manager responds to the new
areas.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .model import Bounds, ChargeProfile, Decision, ScenarioSet, Tariff, validate_tariff
from .solver import SolverConfig, minimize_box, solve_global, solve_individual

log = logging.getLogger(__name__)

CYCLE_QUANTUM = 1e-6


@dataclass(frozen=True)
class GameConfig:
    max_rounds: int = 100
    tol: float = 1e-4
    damping: float = 1.0
    a0: Optional[tuple] = None
    c0: Optional[tuple] = None

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class EquilibriumResult:
    state: Decision
    user_costs: np.ndarray
    manager_cost: float
    rounds: int
    converged: bool
    cycle_detected: bool
    history: list = field(default_factory=list)
    user_breakdowns: list = field(default_factory=list)
    manager_breakdown: object = None

    @property
    def total_cost(self) -> float:
        return float(math.fsum(self.user_costs)) + self.manager_cost

    def to_dict(self) -> dict:
        return {
            "decision": self.state.to_dict(),
            "user_costs": [float(v) for v in self.user_costs],
            "manager_cost": self.manager_cost,
            "total_cost": self.total_cost,
            "rounds": self.rounds,
            "converged": self.converged,
            "cycle_detected": self.cycle_detected,
            "user_breakdowns": [b.to_dict() for b in self.user_breakdowns],
            "manager_breakdown": self.manager_breakdown.to_dict() if self.manager_breakdown else None,
        }


def best_response_user(
    i: int,
    c_alloc_i: float,
    scenarios: ScenarioSet,
    tariff: Tariff,
    bounds: Bounds,
    config: SolverConfig = SolverConfig(),
    a_start: Optional[float] = None,
    workers: int = 1,
) -> float:
    """PV area minimizing user ``i``'s cost for a fixed allowance.

    Starting from the current area means a user already on a flat optimal
    face stays where it is.
    """
    view = scenarios.user(i)

    def oracle(p):
        cost, g = kernels.user_oracle(p[0], c_alloc_i, view, tariff, workers)
        return cost.total, g

    x0 = None if a_start is None else [a_start]
    return float(minimize_box(oracle, [0.0], [bounds.a_max[i]], config, x0).x[0])


def best_response_manager(
    a,
    scenarios: ScenarioSet,
    tariff: Tariff,
    beta_a,
    bounds: Bounds,
    config: SolverConfig = SolverConfig(),
    c_start=None,
    workers: int = 1,
) -> np.ndarray:
    """Allowances minimizing the manager's cost for fixed PV areas."""
    a = np.asarray(a, dtype=float)

    def oracle(p):
        cost, g = kernels.manager_oracle(p, a, scenarios, tariff, beta_a, workers)
        return cost.total, g

    n = scenarios.n_users
    return minimize_box(oracle, np.zeros(n), bounds.c_max, config, c_start).x


def _costs(a, c, scenarios, tariff, beta_a, workers):
    users = [kernels.user_cost(a[i], c[i], scenarios.user(i), tariff, workers) for i in range(len(a))]
    manager = kernels.manager_cost(c, a, scenarios, tariff, beta_a, workers)
    return users, manager


def solve_game(
    scenarios: ScenarioSet,
    tariff: Tariff,
    beta_a,
    bounds: Bounds,
    config: GameConfig = GameConfig(),
    solver: SolverConfig = SolverConfig(),
    workers: int = 1,
) -> EquilibriumResult:
    """Iterate best responses until decisions settle, a cycle appears, or rounds run out.

    On a cycle the lowest-total-cost state visited is returned.
    """
    validate_tariff(tariff, "game")
    n = scenarios.n_users
    if bounds.n_users != n:
        raise ValueError("bounds and scenarios disagree on the number of users")
    a = np.zeros(n) if config.a0 is None else np.clip(np.asarray(config.a0, float), 0, bounds.a_max)
    c = np.zeros(n) if config.c0 is None else np.clip(np.asarray(config.c0, float), 0, bounds.c_max)
    d = config.damping
    seen = {}
    visited = []
    history = [(a.copy(), c.copy())]
    converged = cycle = False
    rounds = 0

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 and n > 1 else None
    try:
        for rounds in range(1, config.max_rounds + 1):
            def respond(i, c=c, a=a):
                return best_response_user(i, c[i], scenarios, tariff, bounds, solver, a[i])

            br_a = np.array(list(pool.map(respond, range(n))) if pool else [respond(i) for i in range(n)])
            a_new = a + d * (br_a - a) if d < 1 else br_a
            br_c = best_response_manager(a_new, scenarios, tariff, beta_a, bounds, solver, c, workers)
            c_new = c + d * (br_c - c) if d < 1 else br_c
            change = max(np.max(np.abs(a_new - a), initial=0.0), np.max(np.abs(c_new - c), initial=0.0))
            a, c = a_new, c_new
            history.append((a.copy(), c.copy()))
            log.debug("round %d: change %.3g", rounds, change)
            if change < config.tol:
                converged = True
                break
            key = tuple(np.round(np.r_[a, c] / CYCLE_QUANTUM).astype(np.int64).tolist())
            if key in seen:
                cycle = True
                visited = history[seen[key]:]
                break
            seen[key] = len(history) - 1
    finally:
        if pool:
            pool.shutdown()

    if cycle:
        totals = []
        for a_v, c_v in visited:
            users, manager = _costs(a_v, c_v, scenarios, tariff, beta_a, workers)
            totals.append(math.fsum(u.total for u in users) + manager.total)
        a, c = visited[int(np.argmin(totals))]
        log.warning("best-response cycle detected after %d rounds", rounds)
    elif not converged:
        log.warning("best responses did not settle in %d rounds", config.max_rounds)

    users, manager = _costs(a, c, scenarios, tariff, beta_a, workers)
    return EquilibriumResult(
        state=Decision(a=a, c=c),
        user_costs=np.array([u.total for u in users]),
        manager_cost=manager.total,
        rounds=rounds,
        converged=converged,
        cycle_detected=cycle,
        history=history,
        user_breakdowns=users,
        manager_breakdown=manager,
    )


@dataclass
class EquilibriumReport:
    passed: bool
    worst_violation: float
    user_violations: np.ndarray
    manager_violation: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "user_violations": [float(v) for v in self.user_violations],
            "manager_violation": self.manager_violation,
        }


def verify_equilibrium(
    state: Decision,
    scenarios: ScenarioSet,
    tariff: Tariff,
    beta_a,
    bounds: Bounds,
    tol: float = 1e-3,
    grid_resolution: int = 201,
    pairs: int = 10,
    pair_resolution: int = 41,
    seed: int = 0,
) -> EquilibriumReport:
    """Scan unilateral deviations around ``state``.

    Each user's area is scanned over a uniform grid with the allowances held
    fixed; the manager's allowances are scanned one coordinate at a time and
    on random coordinate pairs. A violation is the cost reduction achieved by
    the best deviation, divided by ``1 + |current cost|``; the state passes
    when no violation exceeds ``tol``.
    """
    a = np.asarray(state.a, dtype=float)
    c = np.asarray(state.c, dtype=float)
    n = len(a)
    user_viol = np.zeros(n)
    for i in range(n):
        view = scenarios.user(i)
        current = kernels.user_cost(a[i], c[i], view, tariff).total
        grid = np.linspace(0.0, bounds.a_max[i], grid_resolution)
        best = kernels.user_cost_many(grid, c[i], view, tariff).min()
        user_viol[i] = max(0.0, current - best) / (1.0 + abs(current))

    current = kernels.manager_cost(c, a, scenarios, tariff, beta_a).total
    candidates = []
    for i in range(n):
        pts = np.repeat(c[None], grid_resolution, axis=0)
        pts[:, i] = np.linspace(0.0, bounds.c_max[i], grid_resolution)
        candidates.append(pts)
    if n >= 2 and pairs > 0:
        rng = np.random.default_rng(seed)
        for _ in range(pairs):
            i, j = rng.choice(n, size=2, replace=False)
            gi, gj = np.meshgrid(
                np.linspace(0.0, bounds.c_max[i], pair_resolution),
                np.linspace(0.0, bounds.c_max[j], pair_resolution),
                indexing="ij",
            )
            pts = np.repeat(c[None], gi.size, axis=0)
            pts[:, i] = gi.ravel()
            pts[:, j] = gj.ravel()
            candidates.append(pts)
    best = kernels.manager_cost_many(np.concatenate(candidates), a, scenarios, tariff, beta_a).min()
    manager_viol = max(0.0, current - best) / (1.0 + abs(current))
    worst = max(float(user_viol.max(initial=0.0)), manager_viol)
    return EquilibriumReport(worst <= tol, worst, user_viol, manager_viol)


# ---------------------------------------------------------------------------
# Model comparison
# ---------------------------------------------------------------------------


def compare_models(
    scenarios: ScenarioSet,
    tariff: Tariff,
    charge: ChargeProfile,
    bounds: Bounds,
    pi_in_variants: Sequence[float] = (5.0, -5.0),
    baseline_area=None,
    solver: SolverConfig = SolverConfig(),
    game: GameConfig = GameConfig(),
    workers: int = 1,
    game_bounds: Optional[Bounds] = None,
) -> dict:
    """Solve the individual, global and game models on the same scenarios.

    Returns total cost, total PV area and total storage per model, plus the
    per-player results. With ``baseline_area`` the cost of that pre-existing
    PV with no storage is reported, and the individual solves start there.
    ``game_bounds`` caps the game's allowances when they differ from the
    individual storage caps.
    """
    n = scenarios.n_users
    out = {"models": {}}
    base = None
    if baseline_area is not None:
        base = np.asarray(baseline_area, dtype=float).reshape(n)
        base_costs = [
            kernels.individual_cost(base[i], 0.0, scenarios.user(i), tariff, charge.beta[i], workers) for i in range(n)
        ]
        out["models"]["baseline"] = {
            "total_cost": math.fsum(b.total for b in base_costs),
            "pv_total": float(base.sum()),
            "battery_total": 0.0,
            "user_costs": [b.total for b in base_costs],
        }

    ind = [
        solve_individual(
            i,
            scenarios,
            tariff,
            charge.beta,
            bounds,
            solver,
            None if base is None else [min(base[i], bounds.a_max[i]), 0.0],
            workers,
        )
        for i in range(n)
    ]
    out["models"]["individual"] = {
        "total_cost": math.fsum(r.objective for r in ind),
        "pv_total": float(sum(r.x[0] for r in ind)),
        "battery_total": float(sum(r.x[1] for r in ind)),
        "a": [float(r.x[0]) for r in ind],
        "c": [float(r.x[1]) for r in ind],
        "user_costs": [r.objective for r in ind],
        "breakdowns": [r.breakdown.to_dict() for r in ind],
        "converged": all(r.converged for r in ind),
    }
    # Starting the pooled problem from the individual optimum keeps its
    # result no worse than the sum of individual costs.
    g0 = np.r_[[r.x[0] for r in ind], sum(r.x[1] for r in ind)]
    glob = solve_global(scenarios, tariff, charge.beta, bounds, solver, g0, workers)
    out["models"]["global"] = {
        "total_cost": glob.objective,
        "pv_total": float(glob.x[:n].sum()),
        "battery_total": float(glob.x[n]),
        "a": glob.x[:n].tolist(),
        "c_total": float(glob.x[n]),
        "breakdown": glob.breakdown.to_dict(),
        "converged": glob.converged,
    }
    for pi_in in pi_in_variants:
        variant = tariff.replace(pi_in=float(pi_in))
        eq = solve_game(scenarios, variant, charge.beta_a, game_bounds or bounds, game, solver, workers)
        out["models"][f"game(pi_in={float(pi_in):g})"] = {
            "pi_in": float(pi_in),
            "total_cost": eq.total_cost,
            "pv_total": float(eq.state.a.sum()),
            "battery_total": float(eq.state.c.sum()),
            **eq.to_dict(),
        }
    return out
