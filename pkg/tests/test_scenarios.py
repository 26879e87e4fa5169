"""End-to-end solves of the four fixture scenarios."""

import json

import numpy as np
import pytest

from hfgt.model_io import load_scenario
from hfgt.qp import compile_problem
from hfgt.solver import OPTIMAL, extract, solve, verify

from conftest import GOLDENS_PATH, SCENARIOS_DIR

pytestmark = pytest.mark.slow

H2PL4 = "transport-H2-N2-N5@H2PL4"
H2PL6 = "transport-H2-N8-N5@H2PL6"
PUBLISHED = {
    int(key.rsplit("_", 1)[1]): entry["published"]
    for key, entry in json.loads(GOLDENS_PATH.read_text(encoding="utf-8"))["scenarios"].items()
}


@pytest.fixture(scope="module")
def results(fixture_system):
    solved = {}
    for n in range(1, 5):
        scenario = load_scenario(SCENARIOS_DIR / f"scenario_{n}.json", fixture_system.document)
        problem = compile_problem(fixture_system, scenario)
        solution = solve(problem)
        series = extract(solution, problem, fixture_system)
        report = verify(solution, fixture_system, problem)
        solved[n] = (problem, solution, series, report)
    return solved


def _co2(series, resource):
    frame = series.co2_by_resource.set_index("resource")
    return float(frame.loc[resource, "total"]) if resource in frame.index else 0.0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_scenario_is_optimal_and_verified(results, n):
    _, solution, _, report = results[n]
    assert solution.status == OPTIMAL, solution.message
    assert report.passed, report.flagged_blocks[:5]
    assert report.duration_violations == []
    assert report.negative_marking is None


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_objective_matches_published(results, n):
    _, solution, _, _ = results[n]
    assert solution.objective == pytest.approx(PUBLISHED[n]["objective"], rel=0.01)


@pytest.mark.parametrize("n, tolerance", [(1, {"rel": 0.01}), (2, {"rel": 0.01}), (3, {"rel": 0.01}), (4, {"abs": 1.0})])
def test_total_co2_matches_published(results, n, tolerance):
    _, _, series, _ = results[n]
    assert series.total_co2 == pytest.approx(PUBLISHED[n]["total_co2"], **tolerance)


def test_carbon_prices_never_lower_the_cost(results):
    objective = {n: results[n][1].objective for n in results}
    assert objective[2] >= objective[1] - 1e-6 * abs(objective[1])
    assert objective[4] >= objective[3] - 1e-6 * abs(objective[3])


def test_system_wide_price_removes_emissions(results):
    _, _, series, _ = results[4]
    assert series.total_co2 < 1.0


def _starts(result, capability):
    problem, _, series, _ = result
    firings = series.firings
    mask = (firings["capability"] == capability) & (firings["step"] <= problem.layout.horizon)
    return firings[mask]["u_minus"].to_numpy()


def test_steel_mill_price_moves_emissions_upstream(results):
    first, second = results[1][2], results[2][2]
    # only the first demand day still burns gas at the mill
    assert _co2(second, "N5") < 0.1 * _co2(first, "N5")
    # hydrogen for the mill comes from reforming, which emits at N2
    assert _co2(second, "N2") > _co2(first, "N2")
    assert np.count_nonzero(_starts(results[2], H2PL4) > 250.0) == 14


def test_import_pipeline_runs_at_capacity(results):
    starts = _starts(results[4], H2PL6)
    assert starts.max() == pytest.approx(260.0, abs=0.5)
    assert starts.max() <= 260.0 + 1e-3


def test_co2_table_has_one_column_per_day(results):
    _, _, series, _ = results[1]
    columns = list(series.co2_by_resource.columns)
    assert columns[0] == "resource"
    assert columns[1:-1] == [f"day_{k}" for k in range(1, 21)]
    assert columns[-1] == "total"
    assert series.total_co2 == pytest.approx(series.co2_by_resource["total"].sum())
    assert set(series.balances) == {"gas", "hydrogen"}


def test_zero_demand_scenario_is_all_zero(fixture_system, zero_demand_scenario):
    problem = compile_problem(fixture_system, zero_demand_scenario)
    solution = solve(problem)
    assert solution.status == OPTIMAL
    assert np.abs(solution.x).max() < 1e-2
    assert abs(solution.objective) < 1e-2
