"""Domain types shared by every part of the planner.

Units: energy in kWh, PV area in m^2, money in an abstract currency unit
(JPY in the default tariff). Capital prices are already amortized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable, Iterator, Optional

import numpy as np

MODES = ("individual", "global", "game")


class PlannerError(Exception):
    """Base class for all planner errors."""


class ConfigError(PlannerError, ValueError):
    pass


class TariffError(ConfigError):
    """A tariff violates a sign or ordering requirement."""


class DataError(PlannerError, ValueError):
    pass


class SolverError(PlannerError, RuntimeError):
    pass


@dataclass(frozen=True)
class Tariff:
    pi_gas: float = 30.0
    pi_rev: float = 20.0
    pi_pv: float = 2000.0
    pi_b: float = 4500.0
    pi_in: float = 5.0
    pi_out: float = 20.0
    pi_grid: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise TariffError(f"{f.name} must be finite, got {v}")

    def replace(self, **changes) -> "Tariff":
        return Tariff(**{**self.to_dict(), **changes})

    def to_dict(self) -> dict:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


def validate_tariff(tariff: Tariff, mode: str = "individual") -> Tariff:
    """Check the price conditions under which the ``mode`` costs are convex.

    Every mode needs nonnegative gas, reverse-flow and capital prices. The
    game additionally needs ``pi_gas >= pi_out >= pi_in`` (user side) and
    ``pi_out >= pi_grid`` (manager side); ``pi_in`` may be negative.

    Returns the tariff unchanged, raises :class:`TariffError` otherwise.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}, expected one of {MODES}")
    required = ["pi_gas", "pi_rev", "pi_pv", "pi_b"]
    if mode == "game":
        required += ["pi_out", "pi_grid"]
    for name in required:
        if getattr(tariff, name) < 0:
            raise TariffError(f"{name} >= 0 violated ({name}={getattr(tariff, name)})")
    if mode == "game":
        if tariff.pi_gas < tariff.pi_out:
            raise TariffError(
                f"pi_gas >= pi_out violated ({tariff.pi_gas} < {tariff.pi_out})"
            )
        if tariff.pi_out < tariff.pi_in:
            raise TariffError(
                f"pi_out >= pi_in violated ({tariff.pi_out} < {tariff.pi_in})"
            )
        if tariff.pi_out < tariff.pi_grid:
            raise TariffError(
                f"pi_out >= pi_grid violated ({tariff.pi_out} < {tariff.pi_grid})"
            )
    return tariff


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ChargeProfile:
    """Fraction of storage that is charged at the start of each day.

    ``beta`` is per user and day (n, T); ``beta_a`` is the manager's shared
    storage profile (T,).
    """

    beta: np.ndarray
    beta_a: np.ndarray

    def __post_init__(self):
        beta = _frozen(self.beta)
        beta_a = _frozen(self.beta_a)
        if beta.ndim != 2 or beta_a.ndim != 1:
            raise ValueError("beta must be (n, T) and beta_a must be (T,)")
        if beta.shape[1] != beta_a.shape[0]:
            raise ValueError(
                f"day count mismatch: beta has {beta.shape[1]}, beta_a has {beta_a.shape[0]}"
            )
        for name, arr in (("beta", beta), ("beta_a", beta_a)):
            if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta_a", beta_a)

    @classmethod
    def constant(cls, n_users: int, n_days: int, beta: float = 0.5, beta_a: Optional[float] = None):
        beta_a = beta if beta_a is None else beta_a
        return cls(np.full((n_users, n_days), beta), np.full(n_days, beta_a))

    @property
    def n_users(self) -> int:
        return self.beta.shape[0]

    @property
    def n_days(self) -> int:
        return self.beta.shape[1]


@dataclass(frozen=True)
class Bounds:
    """Box limits: PV area per user and a storage cap per user.

    ``c_max`` is the individual capacity cap in the individual model and the
    per-user allocation cap in the game. The global model caps the pooled
    capacity at ``c_max.sum()``.
    """

    a_max: np.ndarray
    c_max: np.ndarray

    def __post_init__(self):
        a = _frozen(np.atleast_1d(self.a_max))
        c = _frozen(np.atleast_1d(self.c_max))
        if a.shape != c.shape or a.ndim != 1:
            raise ValueError("a_max and c_max must be vectors of equal length")
        for name, arr in (("a_max", a), ("c_max", c)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"{name} entries must be strictly positive and finite")
        object.__setattr__(self, "a_max", a)
        object.__setattr__(self, "c_max", c)

    @classmethod
    def uniform(cls, n_users: int, a_max: float, c_max: float) -> "Bounds":
        return cls(np.full(n_users, a_max), np.full(n_users, c_max))

    @property
    def n_users(self) -> int:
        return self.a_max.shape[0]


BlockSource = Callable[[int, int], "tuple[np.ndarray, np.ndarray]"]


class ScenarioSet:
    """N Monte Carlo realizations of consumption ``x`` and generation ``y``.

    Both tensors have shape (N, n, T). A scenario set is either backed by
    arrays or by a ``source(start, stop)`` callable that produces sample rows
    ``start:stop`` on demand; the two forms behave identically, the lazy one
    just never holds all N samples at once.
    """

    def __init__(
        self,
        x: Optional[np.ndarray] = None,
        y: Optional[np.ndarray] = None,
        *,
        seed: Optional[int] = None,
        provenance: str = "arrays",
        source: Optional[BlockSource] = None,
        shape: Optional[tuple] = None,
    ):
        self.seed = seed
        self.provenance = provenance
        if source is None:
            if x is None or y is None:
                raise ValueError("either arrays or a source must be given")
            x = _frozen(x)
            y = _frozen(y)
            if x.ndim != 3 or x.shape != y.shape:
                raise ValueError(f"x and y must be equal (N, n, T) tensors, got {x.shape} and {y.shape}")
            if x.size and (not np.all(np.isfinite(x)) or not np.all(np.isfinite(y))):
                raise ValueError("scenario entries must be finite")
            if x.size and (x.min() < 0 or y.min() < 0):
                raise ValueError("scenario entries must be nonnegative")
            self._x, self._y = x, y
            self._source = None
            self.shape = x.shape
        else:
            if shape is None or len(shape) != 3:
                raise ValueError("a lazy scenario set needs its (N, n, T) shape")
            self._x = self._y = None
            self._source = source
            self.shape = tuple(int(s) for s in shape)

    @property
    def n_samples(self) -> int:
        return self.shape[0]

    @property
    def n_users(self) -> int:
        return self.shape[1]

    @property
    def n_days(self) -> int:
        return self.shape[2]

    @property
    def is_lazy(self) -> bool:
        return self._source is not None

    def block(self, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        stop = min(stop, self.n_samples)
        if self._source is None:
            return self._x[start:stop], self._y[start:stop]
        x, y = self._source(start, stop)
        if x.shape != (stop - start,) + self.shape[1:] or y.shape != x.shape:
            raise ValueError("scenario source returned a block of the wrong shape")
        return x, y

    def blocks(self, size: int) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        for start in range(0, self.n_samples, size):
            x, y = self.block(start, start + size)
            yield start, x, y

    def materialize(self) -> "ScenarioSet":
        if self._source is None:
            return self
        x, y = self.block(0, self.n_samples)
        return ScenarioSet(x, y, seed=self.seed, provenance=self.provenance)

    @property
    def x(self) -> np.ndarray:
        return self.materialize()._x

    @property
    def y(self) -> np.ndarray:
        return self.materialize()._y

    def user(self, i: int) -> "ScenarioSet":
        """Single-user view (shape (N, 1, T)) of user ``i``."""
        if not 0 <= i < self.n_users:
            raise IndexError(f"user index {i} out of range for {self.n_users} users")
        return self.users([i])

    def users(self, idx) -> "ScenarioSet":
        idx = list(idx)
        if self._source is None:
            return ScenarioSet(
                self._x[:, idx], self._y[:, idx], seed=self.seed, provenance=self.provenance
            )
        parent = self._source

        def source(start, stop):
            x, y = parent(start, stop)
            return x[:, idx], y[:, idx]

        return ScenarioSet(
            source=source,
            shape=(self.n_samples, len(idx), self.n_days),
            seed=self.seed,
            provenance=self.provenance,
        )

    def __repr__(self):
        kind = "lazy" if self.is_lazy else "dense"
        return f"ScenarioSet({kind}, N={self.n_samples}, n={self.n_users}, T={self.n_days}, seed={self.seed})"


@dataclass(frozen=True)
class Decision:
    """PV areas and storage decisions.

    ``c`` holds individual capacities or game allocations; the global model
    sets ``c_total`` instead and leaves ``c`` empty.
    """

    a: np.ndarray
    c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_total: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen(np.atleast_1d(self.a)))
        object.__setattr__(self, "c", _frozen(np.atleast_1d(self.c)))
        if np.any(self.a < 0) or np.any(self.c < 0) or (self.c_total is not None and self.c_total < 0):
            raise ValueError("decisions must be nonnegative")

    @property
    def storage_total(self) -> float:
        return float(self.c_total) if self.c_total is not None else float(self.c.sum())

    def within(self, bounds: Bounds, atol: float = 0.0) -> bool:
        ok = bool(np.all(self.a >= -atol) and np.all(self.a <= bounds.a_max + atol))
        if self.c.size:
            ok &= bool(np.all(self.c >= -atol) and np.all(self.c <= bounds.c_max + atol))
        if self.c_total is not None:
            ok &= -atol <= self.c_total <= bounds.c_max.sum() + atol
        return ok

    def to_dict(self) -> dict:
        out = {"a": self.a.tolist(), "c": self.c.tolist()}
        if self.c_total is not None:
            out["c_total"] = float(self.c_total)
        return out


COST_TERMS = (
    "capital_pv",
    "capital_battery",
    "gas",
    "reverse_flow",
    "purchase",
    "sale",
    "exchange",
    "grid",
)


@dataclass(frozen=True)
class CostBreakdown:
    capital_pv: float = 0.0
    capital_battery: float = 0.0
    gas: float = 0.0
    reverse_flow: float = 0.0
    purchase: float = 0.0
    sale: float = 0.0
    exchange: float = 0.0
    grid: float = 0.0

    @property
    def total(self) -> float:
        return math.fsum(getattr(self, k) for k in COST_TERMS)

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(**{k: getattr(self, k) + getattr(other, k) for k in COST_TERMS})

    def to_dict(self) -> dict:
        out = {k: float(getattr(self, k)) for k in COST_TERMS}
        out["total"] = self.total
        return out
