"""Scenario generation and sample-size estimates.

Scenarios are bootstrapped from historical daily records: for target day t
a historical day is drawn uniformly from a seasonal window around t, and
consumption and generation are taken from that same day. Sample sizes
follow the large-deviation bound for sample average approximation, with
diameter, Lipschitz and variance bounds specialised to each model.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import DataError, ScenarioSet, Tariff

log = logging.getLogger(__name__)

CSV_HEADER = ("user_id", "day", "consumption_kwh", "generation_kwh_per_m2")
DEFAULT_WINDOW = 7
DEFAULT_SAMPLE_CAP = 10**7


# ---------------------------------------------------------------------------
# Historical records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistoricalData:
    """Daily consumption and per-m^2 generation for n users over the same days.

    Arrays are (n, T_hist); a missing day is NaN in both arrays. The optional
    ``baseline_area`` is the PV area each user had before any planning.
    """

    user_ids: tuple
    consumption: np.ndarray
    generation: np.ndarray
    baseline_area: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.array(self.consumption, dtype=float)
        y = np.array(self.generation, dtype=float)
        if x.ndim != 2 or x.shape != y.shape:
            raise DataError("consumption and generation must be equal (n, T) arrays")
        if len(self.user_ids) != x.shape[0]:
            raise DataError("one user id per row is required")
        if np.any(np.isnan(x) != np.isnan(y)):
            raise DataError("a missing day must be missing in both series")
        if np.any(np.isinf(x)) or np.any(np.isinf(y)):
            raise DataError("historical values must be finite")
        if np.nanmin(x, initial=0.0) < 0 or np.nanmin(y, initial=0.0) < 0:
            raise DataError("historical values must be nonnegative")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "consumption", x)
        object.__setattr__(self, "generation", y)
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        if self.baseline_area is not None:
            base = np.array(self.baseline_area, dtype=float).reshape(-1)
            if base.shape != (x.shape[0],) or np.any(base < 0):
                raise DataError("baseline_area must hold one nonnegative area per user")
            base.setflags(write=False)
            object.__setattr__(self, "baseline_area", base)

    @property
    def n_users(self) -> int:
        return self.consumption.shape[0]

    @property
    def n_days(self) -> int:
        return self.consumption.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.consumption)


def read_csv(path) -> HistoricalData:
    """Read ``user_id,day,consumption_kwh,generation_kwh_per_m2`` rows.

    Days are 1-based. Users may skip days; skipped days become gaps. A user
    repeating a day is an error.
    """
    rows: dict = {}
    max_day = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                day = int(row[1])
                cons, gen = float(row[2]), float(row[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if day < 1:
                raise DataError(f"{path}:{lineno}: day must be >= 1")
            if not (math.isfinite(cons) and math.isfinite(gen)) or cons < 0 or gen < 0:
                raise DataError(f"{path}:{lineno}: values must be finite and nonnegative")
            user = rows.setdefault(row[0].strip(), {})
            if day in user:
                raise DataError(f"{path}:{lineno}: duplicate day {day} for user {row[0]}")
            user[day] = (cons, gen)
            max_day = max(max_day, day)
    if not rows:
        raise DataError(f"{path}: no data rows")
    ids = list(rows)
    x = np.full((len(ids), max_day), np.nan)
    y = np.full((len(ids), max_day), np.nan)
    for i, uid in enumerate(ids):
        for day, (cons, gen) in rows[uid].items():
            x[i, day - 1] = cons
            y[i, day - 1] = gen
    gaps = int(np.isnan(x).sum())
    if gaps:
        log.info("%s: %d missing user-days kept as gaps", path, gaps)
    return HistoricalData(tuple(ids), x, y)


def write_csv(data: HistoricalData, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, uid in enumerate(data.user_ids):
            for t in range(data.n_days):
                if np.isnan(data.consumption[i, t]):
                    continue
                w.writerow([uid, t + 1, repr(float(data.consumption[i, t])), repr(float(data.generation[i, t]))])


# ---------------------------------------------------------------------------
# Synthetic neighborhood
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticParams:
    """Settings of the synthetic stand-in for measured neighborhood data.

    Consumption is lognormal around a per-user level with a winter bump;
    generation is a yearly sinusoid peaking at ``peak_day`` times a
    neighborhood-wide lognormal weather factor and a small per-user panel
    factor. Defaults give ~10 kWh/day consumption and 0.2-0.8 kWh/m^2/day
    generation.
    """

    consumption_mean: float = 10.0
    consumption_user_sigma: float = 0.3
    consumption_daily_sigma: float = 0.35
    consumption_seasonal_amp: float = 0.2
    generation_mean: float = 0.5
    generation_amp: float = 0.3
    weather_sigma: float = 0.5
    panel_sigma: float = 0.05
    period_days: float = 365.0
    peak_day: float = 182.0
    baseline_area: tuple = (10.0, 30.0)

    def __post_init__(self):
        for name in ("consumption_mean", "period_days"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in (
            "consumption_user_sigma",
            "consumption_daily_sigma",
            "consumption_seasonal_amp",
            "generation_mean",
            "generation_amp",
            "weather_sigma",
            "panel_sigma",
        ):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        lo, hi = self.baseline_area
        if not 0 <= lo <= hi:
            raise ValueError("baseline_area must be an ordered nonnegative range")

    def seasonal_generation(self, days: np.ndarray) -> np.ndarray:
        phase = 2 * np.pi * (days - self.peak_day) / self.period_days
        return np.maximum(self.generation_mean + self.generation_amp * np.cos(phase), 0.0)


def synthetic_neighborhood(n: int, T: int, params: Optional[SyntheticParams] = None, seed: int = 0) -> HistoricalData:
    if n < 1 or T < 1:
        raise ValueError("n and T must be at least 1")
    p = params or SyntheticParams()
    rng = np.random.default_rng(seed)
    days = np.arange(1, T + 1, dtype=float)
    phase = 2 * np.pi * (days - p.peak_day) / p.period_days

    level = p.consumption_mean * rng.lognormal(-0.5 * p.consumption_user_sigma**2, p.consumption_user_sigma, size=(n, 1))
    season = 1.0 - p.consumption_seasonal_amp * np.cos(phase)
    s = p.consumption_daily_sigma
    x = level * season * rng.lognormal(-0.5 * s * s, s, size=(n, T))

    w = p.weather_sigma
    weather = rng.lognormal(-0.5 * w * w, w, size=T)
    panel = rng.lognormal(-0.5 * p.panel_sigma**2, p.panel_sigma, size=(n, 1))
    y = np.maximum(p.seasonal_generation(days) * weather * panel, 0.0)

    base = rng.uniform(*p.baseline_area, size=n)
    return HistoricalData(tuple(f"u{i + 1:03d}" for i in range(n)), x, y, base)


# ---------------------------------------------------------------------------
# Window bootstrap
# ---------------------------------------------------------------------------


def _window_days(T_hist: int, T: int, window: int) -> list:
    """Historical day indices (0-based) eligible for each target day."""
    if 2 * window + 1 >= T_hist:
        return [np.arange(T_hist)] * T
    offsets = np.arange(-window, window + 1)
    return [np.sort((t % T_hist + offsets) % T_hist) for t in range(T)]


def _candidates(valid: np.ndarray, T: int, window: int):
    """Padded candidate table (T, K) and counts (T,) from a validity mask (T_hist,)."""
    lists = [d[valid[d]] for d in _window_days(valid.shape[0], T, window)]
    counts = np.array([len(d) for d in lists])
    if np.any(counts == 0):
        t = int(np.argmin(counts))
        raise DataError(f"empty window: no usable historical day around target day {t + 1}")
    table = np.zeros((T, counts.max()), dtype=np.int64)
    for t, d in enumerate(lists):
        table[t, : len(d)] = d
    return table, counts


def sample_stream(seed: int, j: int) -> np.random.Generator:
    """Counter-based random stream owned by sample ``j``."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(j)]))


def bootstrap_scenarios(
    data: HistoricalData,
    N: int,
    T: Optional[int] = None,
    window: int = DEFAULT_WINDOW,
    seed: int = 0,
    joint: bool = True,
    lazy: bool = False,
) -> ScenarioSet:
    """Resample N scenarios of T days from ``data``.

    ``window`` is the half-width in days of the seasonal neighborhood around
    each target day (wrapping cyclically); 0 is treated as 1. With
    ``joint=True`` one historical day is drawn per (sample, day) and shared by
    all users and by both series, which keeps the consumption/generation
    correlation and the neighborhood-wide weather. With ``joint=False``
    consumption and generation days are drawn independently per user.

    Every sample draws from its own stream keyed by (seed, sample index), so
    the result does not depend on how samples are split into blocks.
    """
    if N <= 0:
        raise ValueError("N must be positive")
    if window < 0:
        raise ValueError("window must be nonnegative")
    window = max(window, 1)
    T = data.n_days if T is None else int(T)
    if T < 1:
        raise ValueError("T must be at least 1")
    n = data.n_users
    cons = np.nan_to_num(data.consumption)
    gen = np.nan_to_num(data.generation)
    ok = ~data.missing
    if joint:
        table, counts = _candidates(ok.all(0), T, window)
    else:
        per_user = [_candidates(ok[i], T, window) for i in range(n)]
        width = max(tb.shape[1] for tb, _ in per_user)
        table = np.zeros((n, T, width), dtype=np.int64)
        counts = np.zeros((n, T), dtype=np.int64)
        for i, (tb, ct) in enumerate(per_user):
            table[i, :, : tb.shape[1]] = tb
            counts[i] = ct
    t_idx = np.arange(T)
    u_idx = np.arange(n)[:, None]

    def source(start: int, stop: int):
        x = np.empty((stop - start, n, T))
        y = np.empty_like(x)
        for k, j in enumerate(range(start, stop)):
            rng = sample_stream(seed, j)
            if joint:
                day = table[t_idx, rng.integers(0, counts)]
                x[k] = cons[:, day]
                y[k] = gen[:, day]
            else:
                dx = table[u_idx, t_idx, rng.integers(0, counts)]
                dy = table[u_idx, t_idx, rng.integers(0, counts)]
                x[k] = cons[u_idx, dx]
                y[k] = gen[u_idx, dy]
        return x, y

    provenance = f"window-bootstrap(window=±{window}, joint={joint}, T_hist={data.n_days})"
    lazy_set = ScenarioSet(source=source, shape=(N, n, T), seed=seed, provenance=provenance)
    return lazy_set if lazy else lazy_set.materialize()


def window_moments(data: HistoricalData, T: Optional[int] = None, window: int = DEFAULT_WINDOW) -> dict:
    """Mean and std of X and Y over each target day's window, per user: (n, T) arrays."""
    window = max(window, 1)
    T = data.n_days if T is None else int(T)
    out = {k: np.empty((data.n_users, T)) for k in ("mean_x", "std_x", "mean_y", "std_y")}
    for t, days in enumerate(_window_days(data.n_days, T, window)):
        xs = data.consumption[:, days]
        ys = data.generation[:, days]
        out["mean_x"][:, t] = np.nanmean(xs, axis=1)
        out["std_x"][:, t] = np.nanstd(xs, axis=1)
        out["mean_y"][:, t] = np.nanmean(ys, axis=1)
        out["std_y"][:, t] = np.nanstd(ys, axis=1)
    return out


def expected_generation_sum(data: HistoricalData, T: Optional[int] = None, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Per-user sum over target days of the window-empirical mean generation."""
    return window_moments(data, T, window)["mean_y"].sum(axis=1)


# ---------------------------------------------------------------------------
# Sample size
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleSizeInputs:
    epsilon: float
    alpha: float
    r: int
    D: float
    L: float
    sigma2: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.delta < self.epsilon:
            raise ValueError("delta must satisfy 0 <= delta < epsilon")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.r < 1:
            raise ValueError("r must be at least 1")
        for name in ("D", "L", "sigma2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("epsilon", "delta", "alpha", "r", "D", "L", "sigma2")}


class VacuousBoundWarning(UserWarning):
    pass


class SampleCapWarning(UserWarning):
    pass


def is_vacuous(inputs: SampleSizeInputs) -> bool:
    """True when the Lipschitz bound alone makes every feasible point good enough."""
    return 2.0 * inputs.D * inputs.L <= inputs.epsilon - inputs.delta


def sample_size_bound(inputs: SampleSizeInputs) -> float:
    """Right-hand side of the sample-size inequality, before rounding.

    Returns 1.0 for a vacuous bound (``2 D L <= epsilon - delta``).
    """
    if is_vacuous(inputs):
        return 1.0
    gap = inputs.epsilon - inputs.delta
    return 12.0 * inputs.sigma2 / gap**2 * (inputs.r * math.log(2.0 * inputs.D * inputs.L / gap) - math.log(inputs.alpha))


def sample_size(inputs: SampleSizeInputs, cap: int = DEFAULT_SAMPLE_CAP) -> int:
    if is_vacuous(inputs):
        warnings.warn("bound vacuous, N=1 suffices at this tolerance", VacuousBoundWarning, stacklevel=2)
        return 1
    n = max(1, math.ceil(sample_size_bound(inputs)))
    if n > cap:
        warnings.warn(f"bound exceeds cap: N={n} > {cap}", SampleCapWarning, stacklevel=2)
        return int(cap)
    return int(n)


def bounds_individual(
    a_max: float,
    c_max: float,
    tariff: Tariff,
    beta,
    mean_y_sum: float,
    epsilon: float,
    alpha: float,
    delta: float = 0.0,
) -> SampleSizeInputs:
    """Inputs for the (a, C) problem of one household; ``beta`` is per day."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    D = max(a_max, c_max)
    pv_slope = max(tariff.pi_gas, tariff.pi_rev) * mean_y_sum
    storage_slope = float(np.maximum(tariff.pi_gas * beta, tariff.pi_rev * (1.0 - beta)).sum())
    L = max(tariff.pi_pv + pv_slope, tariff.pi_b + storage_slope)
    sigma2 = D**2 * max(pv_slope, storage_slope) ** 2
    return SampleSizeInputs(epsilon=epsilon, delta=delta, alpha=alpha, r=2, D=D, L=L, sigma2=sigma2)


def bounds_user(a_max: float, tariff: Tariff, mean_y_sum: float, epsilon: float, alpha: float, delta: float = 0.0) -> SampleSizeInputs:
    D = float(a_max)
    L = tariff.pi_pv + tariff.pi_gas * mean_y_sum
    sigma2 = D**2 * tariff.pi_gas**2 * mean_y_sum**2
    return SampleSizeInputs(epsilon=epsilon, delta=delta, alpha=alpha, r=1, D=D, L=L, sigma2=sigma2)


def bounds_manager(c_alloc_max: Sequence[float], tariff: Tariff, beta_a, epsilon: float, alpha: float, delta: float = 0.0) -> SampleSizeInputs:
    c_alloc_max = np.atleast_1d(np.asarray(c_alloc_max, dtype=float))
    beta_a = np.atleast_1d(np.asarray(beta_a, dtype=float))
    D = float(np.max(np.abs(c_alloc_max)))
    per_day = np.maximum.reduce([
        np.full_like(beta_a, tariff.pi_out),
        tariff.pi_grid * (1.0 + beta_a),
        tariff.pi_rev * beta_a,
    ]) if beta_a.size else np.zeros(0)
    slope = float(per_day.sum())
    return SampleSizeInputs(
        epsilon=epsilon, delta=delta, alpha=alpha, r=len(c_alloc_max), D=D, L=tariff.pi_b + slope, sigma2=D**2 * slope**2
    )
