"""Box-constrained minimization of convex piecewise-linear sample averages.

``minimize_box`` runs projected subgradient descent with best-iterate
retention. Every subgradient evaluation is also a cut of the objective, so
the solver keeps a small cutting-plane model; minimizing that model over the
box (a tiny LP) gives a certified lower bound for the Polyak step target and
a candidate point that is evaluated like any other iterate. For piecewise
linear objectives this closes the optimality gap in finitely many steps.

``grid_oracle`` is the brute-force reference used by the tests.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .model import Bounds, CostBreakdown, Decision, ScenarioSet, SolverError, Tariff, validate_tariff

log = logging.getLogger(__name__)

Oracle = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    tol: float = 1e-8
    stall_window: int = 50
    model_every: int = 1
    max_cuts: int = 400
    step_scale: Optional[float] = None
    keep_trace: bool = False

    def __post_init__(self):
        if self.max_iters < 1 or self.stall_window < 1 or self.model_every < 1 or self.max_cuts < 2:
            raise ValueError("iteration counts must be positive")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.step_scale is not None and not self.step_scale > 0:
            raise ValueError("step_scale must be positive")


@dataclass
class SolveResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    lower_bound: float = -math.inf
    status: str = ""
    decision: Optional[Decision] = None
    breakdown: Optional[CostBreakdown] = None
    trace: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.objective - self.lower_bound

    def to_dict(self) -> dict:
        out = {
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "lower_bound": self.lower_bound if math.isfinite(self.lower_bound) else None,
        }
        if self.decision is not None:
            out["decision"] = self.decision.to_dict()
        if self.breakdown is not None:
            out["breakdown"] = self.breakdown.to_dict()
        return out


def _model_min(cuts_x, cuts_f, cuts_g, lower, upper):
    """Minimize max_j f_j + g_j.(x - x_j) over the box; returns (value, point)."""
    X = np.asarray(cuts_x)
    G = np.asarray(cuts_g)
    F = np.asarray(cuts_f)
    d = X.shape[1]
    # Shift by the best cut value so the LP works with small numbers.
    shift = F.min()
    A = np.hstack([G, -np.ones((len(F), 1))])
    b = np.einsum("ij,ij->i", G, X) - (F - shift)
    res = linprog(
        np.r_[np.zeros(d), 1.0],
        A_ub=A,
        b_ub=b,
        bounds=list(zip(lower, upper)) + [(None, None)],
        method="highs",
    )
    if res.status != 0:
        return -math.inf, None
    z = np.clip(res.x[:d], lower, upper)
    # Re-evaluate the model at the clipped point: a valid bound needs the
    # model value at a feasible point, not the LP's slightly infeasible one.
    model_at_z = float(np.max(F - shift + G @ z - np.einsum("ij,ij->i", G, X)))
    return min(model_at_z, float(res.fun)) + shift, z


def minimize_box(
    oracle: Oracle,
    lower,
    upper,
    config: SolverConfig = SolverConfig(),
    x0=None,
) -> SolveResult:
    """Minimize a convex function given by ``oracle(x) -> (f, subgradient)`` over a box."""
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("invalid box")
    d = lower.size
    x = lower.copy() if x0 is None else np.clip(np.asarray(x0, dtype=float).reshape(-1), lower, upper)
    diam = float(np.linalg.norm(upper - lower))

    def evaluate(p):
        f, g = oracle(p)
        f = float(f)
        g = np.asarray(g, dtype=float).reshape(-1)
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            raise SolverError(f"non-finite oracle value at x={p.tolist()}: f={f}, g={g.tolist()}")
        return f, g

    f, g = evaluate(x)
    best_x, best_f = x.copy(), f
    cuts_x, cuts_f, cuts_g = [x.copy()], [f], [g]
    lb = -math.inf
    trace = [f] if config.keep_trace else []
    history = [best_f]
    scale = config.step_scale if config.step_scale is not None else diam
    status, converged = "max_iters", False
    it = 0

    for it in range(1, config.max_iters + 1):
        tol_abs = config.tol * (1.0 + abs(best_f))
        # A subgradient that does not move the point under projection
        # certifies optimality.
        if np.array_equal(np.clip(x - g, lower, upper), x) and f <= best_f:
            lb = max(lb, f)
            status, converged = "stationary", True
            break

        if it % config.model_every == 0 and d > 0:
            model_lb, z = _model_min(cuts_x, cuts_f, cuts_g, lower, upper)
            lb = max(lb, model_lb)
            if best_f - lb <= tol_abs:
                status, converged = "gap", True
                break
            if z is not None:
                fz, gz = evaluate(z)
                cuts_x.append(z.copy()); cuts_f.append(fz); cuts_g.append(gz)
                if fz < best_f:
                    best_x, best_f = z.copy(), fz
                    tol_abs = config.tol * (1.0 + abs(best_f))
                if best_f - lb <= tol_abs:
                    status, converged = "gap", True
                    break

        gnorm2 = float(g @ g)
        if gnorm2 == 0.0:
            lb = max(lb, f)
            status, converged = "stationary", True
            break
        if math.isfinite(lb):
            step = (f - lb) / gnorm2
        else:
            step = scale / math.sqrt(it) / math.sqrt(gnorm2)
        x = np.clip(x - step * g, lower, upper)
        f, g = evaluate(x)
        if config.keep_trace:
            trace.append(f)
        cuts_x.append(x.copy()); cuts_f.append(f); cuts_g.append(g)
        if f < best_f:
            best_x, best_f = x.copy(), f
        if len(cuts_f) > config.max_cuts:
            # Keep the cut at the incumbent; drop the oldest others.
            keep = int(np.argmin(cuts_f))
            drop = 0 if keep != 0 else 1
            del cuts_x[drop], cuts_f[drop], cuts_g[drop]

        history.append(best_f)
        if len(history) > config.stall_window:
            old = history[-config.stall_window - 1]
            if old - best_f <= config.tol * (1.0 + abs(old)):
                status, converged = "stalled", True
                break

    log.debug("minimize_box: %s after %d iterations, f=%.10g, lb=%.10g", status, it, best_f, lb)
    return SolveResult(
        x=best_x,
        objective=best_f,
        iterations=it,
        converged=converged,
        lower_bound=lb,
        status=status,
        trace=trace,
    )


def grid_oracle(objective: Callable, lower, upper, resolution: int = 401, batched: bool = False) -> SolveResult:
    """Exhaustive minimization over a uniform grid (both endpoints included).

    ``objective`` maps a point to its value, or with ``batched=True`` an
    (M, d) array of points to M values. The result's ``lower_bound`` is set to
    the grid minimum minus the largest objective change between the grid
    argmin and its neighbors, a per-cell variation estimate.
    """
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    d = lower.size
    if d > 3:
        raise ValueError(f"grid oracle limited to 3 dimensions, got {d}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    if batched:
        values = np.asarray(objective(mesh), dtype=float)
    else:
        values = np.array([float(objective(p)) for p in mesh])
    values = values.reshape((resolution,) * d)
    k = np.unravel_index(int(np.argmin(values)), values.shape)
    best = float(values[k])
    variation = 0.0
    for off in itertools.product((-1, 0, 1), repeat=d):
        nb = tuple(ki + o for ki, o in zip(k, off))
        if all(0 <= v < resolution for v in nb):
            variation = max(variation, abs(float(values[nb]) - best))
    x = np.array([axes[i][k[i]] for i in range(d)])
    return SolveResult(
        x=x,
        objective=best,
        iterations=values.size,
        converged=True,
        lower_bound=best - variation,
        status="grid",
    )


# ---------------------------------------------------------------------------
# Model-level solves
# ---------------------------------------------------------------------------


def solve_individual(
    i: int,
    scenarios: ScenarioSet,
    tariff: Tariff,
    beta,
    bounds: Bounds,
    config: SolverConfig = SolverConfig(),
    x0=None,
    workers: int = 1,
) -> SolveResult:
    """Optimal (a_i, C_i) of household ``i`` investing on its own."""
    validate_tariff(tariff, "individual")
    view = scenarios.user(i)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (scenarios.n_users, scenarios.n_days))[i]

    def oracle(p):
        cost, g = kernels.individual_oracle(p[0], p[1], view, tariff, beta, workers)
        return cost.total, g

    res = minimize_box(oracle, [0.0, 0.0], [bounds.a_max[i], bounds.c_max[i]], config, x0)
    res.breakdown = kernels.individual_cost(res.x[0], res.x[1], view, tariff, beta, workers)
    res.objective = res.breakdown.total
    res.decision = Decision(a=[res.x[0]], c=[res.x[1]])
    return res


def solve_global(
    scenarios: ScenarioSet,
    tariff: Tariff,
    beta,
    bounds: Bounds,
    config: SolverConfig = SolverConfig(),
    x0=None,
    workers: int = 1,
) -> SolveResult:
    """Optimal PV areas and pooled capacity when the neighborhood acts as one user.

    The pooled capacity is capped at the sum of the per-user caps.
    """
    validate_tariff(tariff, "global")
    n = scenarios.n_users
    if bounds.n_users != n:
        raise ValueError("bounds and scenarios disagree on the number of users")

    def oracle(p):
        cost, g = kernels.global_oracle(p[:n], p[n], scenarios, tariff, beta, workers)
        return cost.total, g

    upper = np.r_[bounds.a_max, bounds.c_max.sum()]
    res = minimize_box(oracle, np.zeros(n + 1), upper, config, x0)
    res.breakdown = kernels.global_cost(res.x[:n], res.x[n], scenarios, tariff, beta, workers)
    res.objective = res.breakdown.total
    res.decision = Decision(a=res.x[:n], c_total=float(res.x[n]))
    return res
