"""Epigraph linear programs of the sample-average problems, for small N.

Each ``max`` term per sample and day gets an auxiliary variable bounded
below by its affine pieces, which turns a piecewise-linear objective into an
LP that any external solver can check. Programs are written in CPLEX LP
text format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import Bounds, ChargeProfile, ScenarioSet, Tariff, validate_tariff

MAX_ENTRIES = 100_000


class EpigraphTooLarge(ValueError):
    pass


@dataclass
class LinearProgram:
    """minimize cost.x + constant subject to A x >= rhs, lower <= x <= upper."""

    names: list
    cost: np.ndarray
    A: sparse.csr_matrix
    rhs: np.ndarray
    row_names: list
    lower: np.ndarray
    upper: np.ndarray
    constant: float = 0.0
    title: str = ""

    def solve(self):
        """Solve with HiGHS; returns (objective, x)."""
        res = linprog(
            self.cost,
            A_ub=-self.A,
            b_ub=-self.rhs,
            bounds=list(zip(self.lower, self.upper)),
            method="highs",
        )
        if res.status != 0:
            raise RuntimeError(f"LP solve failed: {res.message}")
        return float(res.fun) + self.constant, res.x

    def to_lp(self) -> str:
        lines = [f"\\ {self.title}" if self.title else "\\ epigraph program", "Minimize"]
        terms = [(c, n) for c, n in zip(self.cost, self.names) if c != 0]
        if self.constant != 0:
            terms.append((self.constant, "const_one"))
        lines += _wrap(" obj:", terms)
        lines.append("Subject To")
        A = self.A.tocsr()
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            row = [(A.data[k], self.names[A.indices[k]]) for k in range(lo, hi)]
            body = _wrap(f" {self.row_names[r]}:", row)
            body[-1] += f" >= {_num(self.rhs[r])}"
            lines += body
        lines.append("Bounds")
        for n, lo, hi in zip(self.names, self.lower, self.upper):
            if np.isinf(lo) and np.isinf(hi):
                lines.append(f" {n} free")
            elif np.isinf(hi):
                lines.append(f" {n} >= {_num(lo)}")
            else:
                lines.append(f" {_num(lo)} <= {n} <= {_num(hi)}")
        if self.constant != 0:
            lines.append(" const_one = 1")
        lines.append("End")
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_lp(), encoding="utf-8")
        return path


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _wrap(head: str, terms, per_line: int = 6) -> list:
    if not terms:
        return [head]
    parts = []
    for i, (c, n) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        if i == 0 and sign == "+":
            parts.append(f"{_num(abs(c))} {n}")
        else:
            parts.append(f"{sign} {_num(abs(c))} {n}")
    lines = []
    for k in range(0, len(parts), per_line):
        chunk = " ".join(parts[k : k + per_line])
        lines.append(f"{head} {chunk}" if k == 0 else f"   {chunk}")
    return lines


class _Builder:
    def __init__(self):
        self.names, self.cost, self.lower, self.upper = [], [], [], []
        self.rows, self.cols, self.vals, self.rhs, self.row_names = [], [], [], [], []

    def var(self, name, cost=0.0, lo=0.0, hi=np.inf) -> int:
        self.names.append(name)
        self.cost.append(cost)
        self.lower.append(lo)
        self.upper.append(hi)
        return len(self.names) - 1

    def geq(self, name, coefs: dict, rhs: float):
        r = len(self.rhs)
        for k, v in coefs.items():
            if v != 0:
                self.rows.append(r)
                self.cols.append(k)
                self.vals.append(v)
        self.rhs.append(rhs)
        self.row_names.append(name)

    def build(self, constant=0.0, title="") -> LinearProgram:
        A = sparse.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(len(self.rhs), len(self.names))
        )
        return LinearProgram(
            self.names,
            np.array(self.cost, dtype=float),
            A,
            np.array(self.rhs, dtype=float),
            self.row_names,
            np.array(self.lower, dtype=float),
            np.array(self.upper, dtype=float),
            constant,
            title,
        )


def _guard(scenarios: ScenarioSet, n_users: int):
    size = scenarios.n_samples * scenarios.n_days * n_users
    if size > MAX_ENTRIES:
        raise EpigraphTooLarge(f"N*T*n = {size} exceeds the export limit of {MAX_ENTRIES}")


def individual_lp(i: int, scenarios: ScenarioSet, tariff: Tariff, beta, bounds: Bounds) -> LinearProgram:
    _guard(scenarios, 1)
    x, y = scenarios.x[:, i], scenarios.y[:, i]
    N, T = x.shape
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (scenarios.n_users, T))[i]
    b = _Builder()
    a = b.var("a", tariff.pi_pv, 0.0, bounds.a_max[i])
    c = b.var("c", tariff.pi_b, 0.0, bounds.c_max[i])
    for j in range(N):
        for t in range(T):
            g = b.var(f"gas_{j}_{t}", tariff.pi_gas / N)
            r = b.var(f"rev_{j}_{t}", tariff.pi_rev / N)
            b.geq(f"cgas_{j}_{t}", {g: 1.0, a: y[j, t], c: beta[t]}, x[j, t])
            b.geq(f"crev_{j}_{t}", {r: 1.0, a: -y[j, t], c: 1.0 - beta[t]}, -x[j, t])
    return b.build(title=f"individual investment, user {i}")


def global_lp(scenarios: ScenarioSet, tariff: Tariff, beta, bounds: Bounds) -> LinearProgram:
    n = scenarios.n_users
    _guard(scenarios, n)
    x, y = scenarios.x, scenarios.y
    N, T = scenarios.n_samples, scenarios.n_days
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n, T))
    beta_sum = beta.sum(0)
    b = _Builder()
    a = [b.var(f"a_{i}", tariff.pi_pv, 0.0, bounds.a_max[i]) for i in range(n)]
    c = b.var("c_total", tariff.pi_b, 0.0, bounds.c_max.sum())
    for j in range(N):
        for t in range(T):
            g = b.var(f"gas_{j}_{t}", tariff.pi_gas / N)
            r = b.var(f"rev_{j}_{t}", tariff.pi_rev / N)
            total_x = x[j, :, t].sum()
            b.geq(
                f"cgas_{j}_{t}",
                {g: 1.0, c: beta_sum[t], **{a[i]: y[j, i, t] for i in range(n)}},
                total_x,
            )
            b.geq(
                f"crev_{j}_{t}",
                {r: 1.0, c: n - beta_sum[t], **{a[i]: -y[j, i, t] for i in range(n)}},
                -total_x,
            )
    return b.build(title="global investment")


def user_lp(i: int, c_alloc_i: float, scenarios: ScenarioSet, tariff: Tariff, bounds: Bounds) -> LinearProgram:
    """User ``i``'s problem at a fixed allowance; needs pi_in <= pi_out <= pi_gas."""
    validate_tariff(tariff, "game")
    _guard(scenarios, 1)
    x, y = scenarios.x[:, i], scenarios.y[:, i]
    N, T = x.shape
    b = _Builder()
    a = b.var("a", tariff.pi_pv, 0.0, bounds.a_max[i])
    for j in range(N):
        for t in range(T):
            u = b.var(f"u_{j}_{t}", 1.0 / N, -np.inf)
            b.geq(f"in_{j}_{t}", {u: 1.0, a: tariff.pi_in * y[j, t]}, tariff.pi_in * x[j, t])
            b.geq(f"out_{j}_{t}", {u: 1.0, a: tariff.pi_out * y[j, t]}, tariff.pi_out * x[j, t])
            b.geq(
                f"gas_{j}_{t}",
                {u: 1.0, a: tariff.pi_gas * y[j, t]},
                tariff.pi_gas * x[j, t] - (tariff.pi_gas - tariff.pi_out) * c_alloc_i,
            )
    return b.build(title=f"game user {i} at allowance {c_alloc_i}")


def manager_lp(a, scenarios: ScenarioSet, tariff: Tariff, beta_a, bounds: Bounds) -> LinearProgram:
    """Manager problem at fixed PV areas; exact when pi_out >= pi_grid."""
    validate_tariff(tariff, "game")
    n = scenarios.n_users
    _guard(scenarios, n)
    a = np.asarray(a, dtype=float).reshape(n)
    x, y = scenarios.x, scenarios.y
    N, T = scenarios.n_samples, scenarios.n_days
    beta_a = np.broadcast_to(np.asarray(beta_a, dtype=float), (T,))
    s = x - a[None, :, None] * y
    short = np.maximum(s, 0.0)
    p_in = np.maximum(-s, 0.0).sum(1)
    b = _Builder()
    c = [b.var(f"c_{i}", tariff.pi_b, 0.0, bounds.c_max[i]) for i in range(n)]
    for j in range(N):
        for t in range(T):
            p = [b.var(f"p_{j}_{i}_{t}", -tariff.pi_out / N, 0.0, short[j, i, t]) for i in range(n)]
            for i in range(n):
                b.geq(f"cap_{j}_{i}_{t}", {c[i]: 1.0, p[i]: -1.0}, 0.0)
            g = b.var(f"grid_{j}_{t}", tariff.pi_grid / N)
            r = b.var(f"rev_{j}_{t}", tariff.pi_rev / N)
            b.geq(
                f"cgrid_{j}_{t}",
                {g: 1.0, **{pk: -1.0 for pk in p}, **{ck: beta_a[t] for ck in c}},
                -p_in[j, t],
            )
            b.geq(
                f"crev_{j}_{t}",
                {r: 1.0, **{pk: 1.0 for pk in p}, **{ck: 1.0 - beta_a[t] for ck in c}},
                p_in[j, t],
            )
    constant = tariff.pi_in * p_in.sum() / N if N else 0.0
    return b.build(constant=constant, title="game manager at fixed PV areas")


def export_epigraph(mode: str, scenarios: ScenarioSet, tariff: Tariff, charge: ChargeProfile, bounds: Bounds, a=None, c_alloc=None) -> list:
    """Programs for ``mode``: one per user (individual), one (global), or the manager
    problem at fixed ``a`` plus each user's problem at fixed ``c_alloc`` (game)."""
    n = scenarios.n_users
    if mode == "individual":
        return [(f"individual_u{i}", individual_lp(i, scenarios, tariff, charge.beta, bounds)) for i in range(n)]
    if mode == "global":
        return [("global", global_lp(scenarios, tariff, charge.beta, bounds))]
    if mode == "game":
        a = np.zeros(n) if a is None else np.asarray(a, dtype=float)
        c_alloc = np.zeros(n) if c_alloc is None else np.asarray(c_alloc, dtype=float)
        out = [("manager", manager_lp(a, scenarios, tariff, charge.beta_a, bounds))]
        out += [(f"user_u{i}", user_lp(i, c_alloc[i], scenarios, tariff, bounds)) for i in range(n)]
        return out
    raise ValueError(f"no epigraph export for mode {mode!r}")
