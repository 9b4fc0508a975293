import csv
import json

import pytest

from zehplan import Tariff, kernels, saa
from zehplan.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_IO,
    EXIT_OK,
    load_config,
    main,
)

from conftest import MONTH_TARIFF


def _config(tmp_path, body: dict, name="config.json"):
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return path


def _synth(tmp_path, n=5, T=30, seed=7):
    cfg = _config(tmp_path, {"synth": {"n_users": n, "days": T}, "seed": seed}, "synth.json")
    out = tmp_path / "synth"
    assert main(["synth", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    return out / "data.csv"


def test_empty_config_gives_default_prices(tmp_path):
    cfg = load_config(_config(tmp_path, {}), "individual")
    assert cfg.tariff_obj == Tariff()
    assert cfg.beta == 0.5 and cfg.beta_a == 0.5
    assert load_config(None, "game").tariff_obj == Tariff()


def test_penalty_sale_price_is_accepted(tmp_path):
    cfg = load_config(_config(tmp_path, {"tariff": {"pi_in": -5}}), "game")
    assert cfg.tariff_obj.pi_in == -5


@pytest.mark.parametrize(
    "body, fragment",
    [
        ({"tariff": {"pi_gas": -1}}, "pi_gas >= 0"),
        ({"tariff": {"pi_gaz": 1}}, "Additional properties"),
        ({"bounds": {"a_max": 0}}, "bounds/a_max"),
        ({"samples": 0}, "samples"),
        ({"solver": {"tol": 2}}, "solver/tol"),
        ({"tariff": {"pi_out": 40}}, "pi_gas >= pi_out"),
        ({"data": "missing.csv"}, "not found"),
    ],
)
def test_config_errors(tmp_path, caplog, body, fragment):
    path = _config(tmp_path, body)
    assert main(["game", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_CONFIG
    assert fragment in caplog.text


def test_invalid_json_and_missing_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["individual", "--config", str(bad), "--quiet"]) == EXIT_CONFIG
    assert main(["individual", "--config", str(tmp_path / "nope.json"), "--quiet"]) == EXIT_CONFIG


def test_data_error_exit_code(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("user_id,day,consumption_kwh,generation_kwh_per_m2\na,1,1,1\na,1,1,1\n")
    cfg = _config(tmp_path, {"data": "d.csv"})
    assert main(["individual", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_DATA


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["synth", "--out", str(blocker / "sub"), "--quiet"]) == EXIT_IO


def test_synth_is_deterministic(tmp_path):
    a = _synth(tmp_path / "a")
    b = _synth(tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    data = saa.read_csv(a)
    assert data.n_users == 5 and data.n_days == 30


def test_individual_report_matches_library(tmp_path):
    data_path = _synth(tmp_path)
    cfg = _config(
        tmp_path,
        {
            "data": str(data_path),
            "samples": 200,
            "seed": 3,
            "tariff": {"pi_pv": MONTH_TARIFF.pi_pv, "pi_b": MONTH_TARIFF.pi_b},
            "bounds": {"a_max": 40, "c_max": 10},
        },
    )
    out = tmp_path / "ind"
    assert main(["individual", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1 and report["seed"] == 3
    assert report["config"]["samples"] == 200

    data = saa.read_csv(data_path)
    scen = saa.bootstrap_scenarios(data, 200, 30, seed=3)
    for i, user in enumerate(report["result"]["users"]):
        a, c = user["decision"]["a"][0], user["decision"]["c"][0]
        again = kernels.individual_cost(a, c, scen.user(i), MONTH_TARIFF, 0.5)
        assert user["objective"] == again.total
        assert user["breakdown"] == again.to_dict()

    with open(out / "costs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["total"]) for r in rows] == [u["objective"] for u in report["result"]["users"]]
    with open(out / "decisions.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 5


def test_game_costs_csv_matches_report(tmp_path):
    cfg = _config(tmp_path, {"synth": {"n_users": 3, "days": 10}, "samples": 50, "tariff": {"pi_pv": 100, "pi_b": 200}})
    out = tmp_path / "g"
    assert main(["game", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    eq = json.loads((out / "report.json").read_text())["result"]["equilibrium"]
    with open(out / "costs.csv") as fh:
        totals = [float(r["total"]) for r in csv.DictReader(fh)]
    assert totals == eq["user_costs"] + [eq["manager_cost"]]


def test_overrides_are_echoed(tmp_path):
    out = tmp_path / "o"
    assert main(["global", "--out", str(out), "--seed", "11", "--samples", "20", "--quiet"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 11 and report["config"]["samples"] == 20
    assert report["result"]["scenarios"]["N"] == 20


def test_samplesize_matches_hand_inputs(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("user_id,day,consumption_kwh,generation_kwh_per_m2\nu,1,10,2\n")
    cfg = _config(tmp_path, {"data": "d.csv", "bounds": {"a_max": 10, "c_max": 10, "c_alloc_max": 10}})
    out = tmp_path / "s"
    assert main(["samplesize", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    result = json.loads((out / "report.json").read_text())["result"]
    user = result["users"][0]["game_user"]
    assert (user["D"], user["L"], user["sigma2"]) == (10, 2060, 360000)
    expected = saa.sample_size(saa.bounds_user(10, Tariff(), 2.0, 5000, 0.01))
    assert user["N"] == expected
    ind = result["users"][0]["individual"]
    assert (ind["D"], ind["L"], ind["sigma2"]) == (10, 4515, 360000)
    assert "window-empirical" in result["expected_generation_source"]


def test_export_lp_mode(tmp_path):
    cfg = _config(tmp_path, {"synth": {"n_users": 2, "days": 3}, "samples": 5, "export": {"mode": "game", "a": [1, 2], "c_alloc": [1, 1]}})
    out = tmp_path / "lp"
    assert main(["export-lp", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    assert sorted(p.name for p in out.glob("*.lp")) == ["manager.lp", "user_u0.lp", "user_u1.lp"]


def test_compare_writes_summary(tmp_path):
    cfg = _config(
        tmp_path,
        {"synth": {"n_users": 3, "days": 10}, "samples": 40, "tariff": {"pi_pv": MONTH_TARIFF.pi_pv, "pi_b": MONTH_TARIFF.pi_b}},
    )
    out = tmp_path / "c"
    assert main(["compare", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    with open(out / "summary.csv") as fh:
        names = [r["model"] for r in csv.DictReader(fh)]
    assert names == ["baseline", "individual", "global", "game(pi_in=5)", "game(pi_in=-5)"]
