"""``zeh-plan`` command line front end.

    zeh-plan <mode> [--config PATH] [--out DIR] [--seed S] [--samples N] [--workers W] [--quiet]

Modes: synth, individual, global, game, compare, samplesize, export-lp.

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 data error, 4 solver error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__, epigraph, saa
from .game import GameConfig, compare_models, solve_game
from .model import (
    COST_TERMS,
    Bounds,
    ChargeProfile,
    ConfigError,
    CostBreakdown,
    DataError,
    PlannerError,
    SolverError,
    Tariff,
    validate_tariff,
)
from .solver import SolverConfig, solve_global, solve_individual

log = logging.getLogger("zehplan")

SCHEMA_VERSION = 1
MODES = ("synth", "individual", "global", "game", "compare", "samplesize", "export-lp")

EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4, 5

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_frac = {"type": "number", "minimum": 0, "maximum": 1}
_posint = {"type": "integer", "minimum": 1}
_cap = {"anyOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]}


def _obj(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


CONFIG_SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "data": {"type": "string"},
        "tariff": _obj({k: _num for k in ("pi_gas", "pi_rev", "pi_pv", "pi_b", "pi_in", "pi_out", "pi_grid")}),
        "beta": _frac,
        "beta_a": _frac,
        "bounds": _obj({"a_max": _cap, "c_max": _cap, "c_alloc_max": _cap}),
        "baseline_area": {"anyOf": [{"type": "number", "minimum": 0}, {"type": "array", "items": {"type": "number", "minimum": 0}}]},
        "samples": _posint,
        "days": _posint,
        "window": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "joint": {"type": "boolean"},
        "solver": _obj(
            {
                "max_iters": _posint,
                "tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "stall_window": _posint,
                "model_every": _posint,
                "max_cuts": {"type": "integer", "minimum": 2},
            }
        ),
        "game": _obj(
            {
                "max_rounds": _posint,
                "tol": _pos,
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            }
        ),
        "synth": _obj(
            {
                "n_users": _posint,
                "days": _posint,
                "params": _obj(
                    {
                        **{
                            k: {"type": "number", "minimum": 0}
                            for k in (
                                "consumption_mean",
                                "consumption_user_sigma",
                                "consumption_daily_sigma",
                                "consumption_seasonal_amp",
                                "generation_mean",
                                "generation_amp",
                                "weather_sigma",
                                "panel_sigma",
                                "period_days",
                                "peak_day",
                            )
                        },
                        "baseline_area": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2},
                    }
                ),
            }
        ),
        "samplesize": _obj(
            {
                "epsilon": _pos,
                "delta": {"type": "number", "minimum": 0},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "cap": _posint,
            }
        ),
        "compare": _obj({"pi_in_variants": {"type": "array", "items": _num, "minItems": 1}}),
        "export": _obj(
            {
                "mode": {"enum": ["individual", "global", "game"]},
                "a": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "c_alloc": {"type": "array", "items": {"type": "number", "minimum": 0}},
            }
        ),
    }
)


@dataclass
class RunConfig:
    mode: str
    data: Optional[str] = None
    tariff: dict = field(default_factory=lambda: Tariff().to_dict())
    beta: float = 0.5
    beta_a: float = 0.5
    bounds: dict = field(default_factory=lambda: {"a_max": 40.0, "c_max": 20.0, "c_alloc_max": 10.0})
    baseline_area: Optional[object] = None
    samples: int = 200
    days: Optional[int] = None
    window: int = saa.DEFAULT_WINDOW
    seed: int = 0
    joint: bool = True
    solver: dict = field(default_factory=lambda: {k: v for k, v in asdict(SolverConfig()).items() if k in ("max_iters", "tol", "stall_window", "model_every", "max_cuts")})
    game: dict = field(default_factory=lambda: {"max_rounds": 100, "tol": 1e-4, "damping": 1.0})
    synth: dict = field(default_factory=lambda: {"n_users": 5, "days": 30, "params": {}})
    samplesize: dict = field(default_factory=lambda: {"epsilon": 5000.0, "delta": 0.0, "alpha": 0.01, "cap": saa.DEFAULT_SAMPLE_CAP})
    compare: dict = field(default_factory=lambda: {"pi_in_variants": [5.0, -5.0]})
    export: dict = field(default_factory=lambda: {"mode": "individual"})
    base_dir: str = "."

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        out["schema_version"] = SCHEMA_VERSION
        return out

    @property
    def tariff_obj(self) -> Tariff:
        return Tariff(**self.tariff)

    @property
    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    @property
    def game_config(self) -> GameConfig:
        return GameConfig(**self.game)

    def data_path(self) -> Optional[Path]:
        if self.data is None:
            return None
        p = Path(self.data)
        return p if p.is_absolute() else Path(self.base_dir) / p


def load_config(path, mode: str) -> RunConfig:
    """Read and validate a JSON config; missing entries take the defaults.

    ``path`` may be None for an all-default run.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    raw: dict = {}
    base = "."
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        base = str(path.parent)
    errors = sorted(jsonschema.Draft7Validator(CONFIG_SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}")

    cfg = RunConfig(mode=mode, base_dir=base)
    for key, value in raw.items():
        if key == "schema_version":
            continue
        default = getattr(cfg, key)
        if isinstance(default, dict) and key not in ("baseline_area",):
            merged = dict(default)
            merged.update(value)
            if key == "synth" and "params" in value:
                merged["params"] = dict(value["params"])
            setattr(cfg, key, merged)
        else:
            setattr(cfg, key, value)

    tariff = cfg.tariff_obj
    model_mode = {"game": "game", "compare": "game", "global": "global"}.get(mode, "individual")
    if mode == "export-lp":
        model_mode = cfg.export.get("mode", "individual")
    validate_tariff(tariff, model_mode)
    if mode == "compare":
        for pi_in in cfg.compare["pi_in_variants"]:
            validate_tariff(tariff.replace(pi_in=pi_in), "game")
    if cfg.data is not None and not cfg.data_path().exists():
        raise ConfigError(f"data file not found: {cfg.data_path()}")
    return cfg


# ---------------------------------------------------------------------------
# Pipeline helpers
# ---------------------------------------------------------------------------


def _load_data(cfg: RunConfig) -> tuple:
    if cfg.data is not None:
        return saa.read_csv(cfg.data_path()), f"csv:{cfg.data}"
    s = cfg.synth
    params = saa.SyntheticParams(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in s.get("params", {}).items()})
    data = saa.synthetic_neighborhood(s["n_users"], s["days"], params, cfg.seed)
    return data, f"synthetic(n={s['n_users']}, T={s['days']}, seed={cfg.seed})"


def _vector(value, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(n, float(arr[0]))
    if arr.size != n:
        raise ConfigError(f"{name} has {arr.size} entries for {n} users")
    return arr


def _setup(cfg: RunConfig):
    data, source = _load_data(cfg)
    n = data.n_users
    T = cfg.days or data.n_days
    b = cfg.bounds
    ind_bounds = Bounds(_vector(b["a_max"], n, "a_max"), _vector(b["c_max"], n, "c_max"))
    game_bounds = Bounds(_vector(b["a_max"], n, "a_max"), _vector(b["c_alloc_max"], n, "c_alloc_max"))
    charge = ChargeProfile.constant(n, T, cfg.beta, cfg.beta_a)
    return data, source, T, ind_bounds, game_bounds, charge


def _scenarios(cfg: RunConfig, data, T):
    return saa.bootstrap_scenarios(data, cfg.samples, T, cfg.window, cfg.seed, cfg.joint)


def _baseline(cfg: RunConfig, data):
    if cfg.baseline_area is not None:
        return _vector(cfg.baseline_area, data.n_users, "baseline_area")
    return data.baseline_area


def _cost_row(model: str, player: str, bd: dict) -> dict:
    return {"model": model, "player": player, **{k: bd[k] for k in COST_TERMS}, "total": bd["total"]}


def _write_csv(path: Path, rows: list, columns: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c] for c in columns])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _clean(obj):
    """Convert numpy scalars and arrays into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------


def _run_synth(cfg, out: Path) -> dict:
    data, source = _load_data(cfg)
    saa.write_csv(data, out / "data.csv")
    return {
        "data_source": source,
        "n_users": data.n_users,
        "days": data.n_days,
        "mean_consumption_kwh": float(np.nanmean(data.consumption)),
        "mean_generation_kwh_per_m2": float(np.nanmean(data.generation)),
        "baseline_area": data.baseline_area,
        "files": ["data.csv"],
    }


def _run_models(cfg, out: Path, which: str, workers: int) -> dict:
    data, source, T, ind_bounds, game_bounds, charge = _setup(cfg)
    scen = _scenarios(cfg, data, T)
    tariff = cfg.tariff_obj
    solver = cfg.solver_config
    users = list(data.user_ids)
    costs, decisions = [], []
    result: dict = {"data_source": source, "scenarios": {"N": scen.n_samples, "n": scen.n_users, "T": scen.n_days, "provenance": scen.provenance}}

    if which == "individual":
        players = []
        for i in range(data.n_users):
            r = solve_individual(i, scen, tariff, charge.beta, ind_bounds, solver, workers=workers)
            players.append({"user": users[i], **r.to_dict()})
            costs.append(_cost_row("individual", users[i], r.breakdown.to_dict()))
            decisions.append({"model": "individual", "player": users[i], "a": r.x[0], "c": r.x[1]})
        result["users"] = players
        result["total_cost"] = math.fsum(p["objective"] for p in players)
    elif which == "global":
        r = solve_global(scen, tariff, charge.beta, ind_bounds, solver, workers=workers)
        result["solution"] = r.to_dict()
        result["total_cost"] = r.objective
        costs.append(_cost_row("global", "neighborhood", r.breakdown.to_dict()))
        for i, u in enumerate(users):
            decisions.append({"model": "global", "player": u, "a": r.x[i], "c": ""})
        decisions.append({"model": "global", "player": "pooled", "a": "", "c": r.x[-1]})
    elif which == "game":
        eq = solve_game(scen, tariff, charge.beta_a, game_bounds, cfg.game_config, solver, workers)
        result["equilibrium"] = eq.to_dict()
        result["total_cost"] = eq.total_cost
        for i, u in enumerate(users):
            costs.append(_cost_row("game", u, eq.user_breakdowns[i].to_dict()))
            decisions.append({"model": "game", "player": u, "a": eq.state.a[i], "c": eq.state.c[i]})
        costs.append(_cost_row("game", "manager", eq.manager_breakdown.to_dict()))
    else:  # compare
        base = _baseline(cfg, data)
        cmp = compare_models(
            scen, tariff, charge, ind_bounds, cfg.compare["pi_in_variants"], base, solver, cfg.game_config, workers,
            game_bounds=game_bounds,
        )
        result["comparison"] = cmp
        summary = []
        for name, m in cmp["models"].items():
            summary.append({"model": name, "total_cost": m["total_cost"], "pv_total": m["pv_total"], "battery_total": m["battery_total"]})
            costs.append({"model": name, "player": "all", **{k: "" for k in COST_TERMS}, "total": m["total_cost"]})
        result["summary"] = summary
        _write_csv(out / "summary.csv", summary, ["model", "total_cost", "pv_total", "battery_total"])
        ind = cmp["models"]["individual"]
        for i, u in enumerate(users):
            decisions.append({"model": "individual", "player": u, "a": ind["a"][i], "c": ind["c"][i]})

    _write_csv(out / "costs.csv", costs, ["model", "player", *COST_TERMS, "total"])
    _write_csv(out / "decisions.csv", decisions, ["model", "player", "a", "c"])
    result["files"] = ["costs.csv", "decisions.csv"] + (["summary.csv"] if which == "compare" else [])
    return result


def _with_n(inputs, cap) -> dict:
    with warnings.catch_warnings():
        # Vacuous and capped bounds are reported through the flags below.
        warnings.simplefilter("ignore")
        n = saa.sample_size(inputs, cap)
    return {**inputs.to_dict(), "N": n, "vacuous": saa.is_vacuous(inputs), "capped": saa.sample_size_bound(inputs) > cap}


def _run_samplesize(cfg, out: Path) -> dict:
    data, source, T, ind_bounds, game_bounds, charge = _setup(cfg)
    tariff = cfg.tariff_obj
    ss = cfg.samplesize
    eps, delta, alpha, cap = ss["epsilon"], ss["delta"], ss["alpha"], ss["cap"]
    mean_y = saa.expected_generation_sum(data, T, cfg.window)
    per_user = []
    for i, u in enumerate(data.user_ids):
        ind = saa.bounds_individual(ind_bounds.a_max[i], ind_bounds.c_max[i], tariff, charge.beta[i], mean_y[i], eps, alpha, delta)
        usr = saa.bounds_user(game_bounds.a_max[i], tariff, mean_y[i], eps, alpha, delta)
        per_user.append(
            {
                "user": u,
                "mean_generation_sum": float(mean_y[i]),
                "individual": _with_n(ind, cap),
                "game_user": _with_n(usr, cap),
            }
        )
    manager = _with_n(saa.bounds_manager(game_bounds.c_max, tariff, charge.beta_a, eps, alpha, delta), cap)
    _write_csv(
        out / "samplesize.csv",
        [
            {"user": p["user"], "mean_generation_sum": p["mean_generation_sum"], "N_individual": p["individual"]["N"], "N_user": p["game_user"]["N"]}
            for p in per_user
        ],
        ["user", "mean_generation_sum", "N_individual", "N_user"],
    )
    return {
        "data_source": source,
        "expected_generation_source": f"window-empirical mean (half-width {max(cfg.window, 1)} days)",
        "days": T,
        "users": per_user,
        "manager": manager,
        "max_N": {
            "individual": max(p["individual"]["N"] for p in per_user),
            "game_user": max(p["game_user"]["N"] for p in per_user),
            "manager": manager["N"],
        },
        "files": ["samplesize.csv"],
    }


def _run_export(cfg, out: Path) -> dict:
    data, source, T, ind_bounds, game_bounds, charge = _setup(cfg)
    scen = _scenarios(cfg, data, T)
    mode = cfg.export.get("mode", "individual")
    bounds = game_bounds if mode == "game" else ind_bounds
    programs = epigraph.export_epigraph(
        mode, scen, cfg.tariff_obj, charge, bounds, cfg.export.get("a"), cfg.export.get("c_alloc")
    )
    files = []
    for name, lp in programs:
        lp.write(out / f"{name}.lp")
        files.append(f"{name}.lp")
    return {"data_source": source, "export_mode": mode, "files": files}


def run(cfg: RunConfig, out_dir, workers: int = 1) -> dict:
    """Execute ``cfg.mode`` and write its artifacts into ``out_dir``; returns the report."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if cfg.mode == "synth":
        result = _run_synth(cfg, out)
    elif cfg.mode in ("individual", "global", "game", "compare"):
        result = _run_models(cfg, out, cfg.mode, workers)
    elif cfg.mode == "samplesize":
        result = _run_samplesize(cfg, out)
    else:
        result = _run_export(cfg, out)
    report = _clean(
        {
            "schema_version": SCHEMA_VERSION,
            "tool": f"zehplan {__version__}",
            "mode": cfg.mode,
            "seed": cfg.seed,
            "config": cfg.echo(),
            "result": result,
        }
    )
    _write_json(out / "report.json", report)
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zeh-plan", description="PV and storage investment planning under uncertainty.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", default="zeh-out", help="output directory (default: zeh-out)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--samples", type=int, help="override the configured sample count N")
    p.add_argument("--workers", type=int, default=1, help="parallel workers (results do not depend on this)")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.mode)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.samples is not None:
            if args.samples < 1:
                raise ConfigError("--samples must be positive")
            cfg.samples = args.samples
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        report = run(cfg, args.out, args.workers)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except SolverError as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (PlannerError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except Exception:
        log.exception("unexpected failure")
        return EXIT_UNEXPECTED
    if not args.quiet:
        total = report["result"].get("total_cost")
        msg = f"{args.mode}: wrote {args.out}/report.json"
        if total is not None:
            msg += f" (total cost {total:.2f})"
        print(msg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
