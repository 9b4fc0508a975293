import numpy as np
import pytest

from zehplan import Bounds, ChargeProfile, Tariff, kernels
from zehplan.epigraph import EpigraphTooLarge, export_epigraph, individual_lp, manager_lp, user_lp
from zehplan.game import best_response_manager, best_response_user
from zehplan.solver import grid_oracle, solve_global, solve_individual

from conftest import make_scenarios, random_scenarios

TARIFF = Tariff(pi_pv=50.0, pi_b=60.0)
BOUNDS = Bounds.uniform(2, 30.0, 10.0)
A = np.array([5.0, 8.0])
C_ALLOC = np.array([2.0, 3.0])


@pytest.fixture(scope="module")
def scen():
    return random_scenarios(np.random.default_rng(0), 10, 2, 3)


@pytest.fixture(scope="module")
def programs(scen):
    charge = ChargeProfile.constant(2, 3)
    progs = dict(export_epigraph("individual", scen, TARIFF, charge, BOUNDS))
    progs.update(export_epigraph("global", scen, TARIFF, charge, BOUNDS))
    progs.update(export_epigraph("game", scen, TARIFF, charge, BOUNDS, a=A, c_alloc=C_ALLOC))
    return progs


def test_program_names(programs):
    assert set(programs) == {"individual_u0", "individual_u1", "global", "manager", "user_u0", "user_u1"}


def test_lp_optima_match_the_solver(scen, programs):
    for i in range(2):
        ref = solve_individual(i, scen, TARIFF, 0.5, BOUNDS).objective
        assert programs[f"individual_u{i}"].solve()[0] == pytest.approx(ref, rel=1e-8)
        a_i = best_response_user(i, C_ALLOC[i], scen, TARIFF, BOUNDS)
        ref = kernels.user_cost(a_i, C_ALLOC[i], scen.user(i), TARIFF).total
        assert programs[f"user_u{i}"].solve()[0] == pytest.approx(ref, rel=1e-8)
    ref = solve_global(scen, TARIFF, 0.5, BOUNDS).objective
    assert programs["global"].solve()[0] == pytest.approx(ref, rel=1e-8)
    c = best_response_manager(A, scen, TARIFF, 0.5, BOUNDS)
    ref = kernels.manager_cost(c, A, scen, TARIFF, 0.5).total
    assert programs["manager"].solve()[0] == pytest.approx(ref, rel=1e-8)


def test_lp_value_at_solution_equals_cost(scen):
    lp = individual_lp(0, scen, TARIFF, 0.5, BOUNDS)
    obj, x = lp.solve()
    a, c = x[lp.names.index("a")], x[lp.names.index("c")]
    assert obj == pytest.approx(kernels.individual_cost(a, c, scen.user(0), TARIFF, 0.5).total, rel=1e-8)


def test_lp_files_round_trip_through_highs(tmp_path, programs):
    highspy = pytest.importorskip("highspy")
    for name, lp in programs.items():
        path = lp.write(tmp_path / f"{name}.lp")
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        assert h.readModel(str(path)) == highspy.HighsStatus.kOk
        h.run()
        assert h.getInfo().objective_function_value == pytest.approx(lp.solve()[0], rel=1e-8, abs=1e-8), name


def test_lp_text_shape(programs):
    text = programs["manager"].to_lp()
    assert text.startswith("\\ ")
    for section in ("Minimize", "Subject To", "Bounds", "End"):
        assert f"\n{section}\n" in text or text.endswith(f"{section}\n")
    assert "const_one = 1" in text
    assert " free" in programs["user_u0"].to_lp()


def test_size_guard():
    big = random_scenarios(np.random.default_rng(1), 2000, 2, 30)
    with pytest.raises(EpigraphTooLarge):
        manager_lp(A, big, TARIFF, 0.5, BOUNDS)


def test_game_programs_require_a_valid_tariff(scen):
    with pytest.raises(ValueError):
        user_lp(0, 1.0, scen, Tariff(pi_in=30.0), BOUNDS)
    with pytest.raises(ValueError):
        export_epigraph("compare", scen, TARIFF, ChargeProfile.constant(2, 3), BOUNDS)


def test_single_sample_lp_matches_grid():
    scen = make_scenarios([[[10.0]]], [[[2.0]]])
    t = Tariff(pi_pv=5.0, pi_b=12.0)
    bounds = Bounds.uniform(1, 10.0, 10.0)
    obj, _ = individual_lp(0, scen, t, 0.5, bounds).solve()
    grid = grid_oracle(lambda p: kernels.individual_cost(p[0], p[1], scen, t, 0.5).total, [0, 0], [10, 10], 401)
    assert grid.lower_bound - 1e-9 <= obj <= grid.objective + 1e-9


def test_zero_scenario_lp_has_only_capital_terms():
    scen = make_scenarios(np.zeros((0, 1, 3)), np.zeros((0, 1, 3)))
    lp = individual_lp(0, scen, Tariff(), 0.5, Bounds.uniform(1, 5.0, 5.0))
    obj, x = lp.solve()
    assert obj == 0.0 and lp.names == ["a", "c"]
    np.testing.assert_array_equal(x, [0.0, 0.0])
