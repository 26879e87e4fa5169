import json

import pytest
from typer.testing import CliRunner

from app import EXIT_OK, EXIT_VALIDATION, app
from database.schema import HFNetDB

from conftest import MODEL_PATH, SCENARIOS_DIR, toy_model_dict, toy_scenario_dict

runner = CliRunner()


@pytest.fixture(autouse=True)
def isolated_db(tmp_path, monkeypatch):
    path = tmp_path / "cli.db"
    monkeypatch.setenv("HFNET_DB_PATH", str(path))
    monkeypatch.setenv("HFNET_SOLVER", "CLARABEL")
    return path


@pytest.fixture
def toy_files(tmp_path):
    model = tmp_path / "toy_model.json"
    model.write_text(json.dumps(toy_model_dict(), indent=2), encoding="utf-8")
    scenarios = tmp_path / "scenarios"
    scenarios.mkdir()
    scenario = scenarios / "toy.json"
    scenario.write_text(json.dumps(toy_scenario_dict(), indent=2), encoding="utf-8")
    return model, scenario


def test_dims_only_prints_the_dimension_block():
    result = runner.invoke(app, [
        "run", "--model", str(MODEL_PATH), "--scenario", str(SCENARIOS_DIR / "scenario_1.json"), "--dims-only",
    ])
    assert result.exit_code == EXIT_OK, result.output
    assert "sigma(x)            8463 (formula 8463)" in result.output
    assert "sigma(A)            7323 (formula 7323)" in result.output
    assert "duration rows pinned to U-=0: 2" in result.output


def test_bad_scenario_exits_with_validation_code(tmp_path, toy_files, isolated_db):
    model, _ = toy_files
    data = toy_scenario_dict(horizon=20)
    data["demand"]["serve@tank"] = [1.0] * 19
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data), encoding="utf-8")

    result = runner.invoke(app, ["run", "--model", str(model), "--scenario", str(bad)])
    assert result.exit_code == EXIT_VALIDATION
    assert "19 values, horizon is 20" in result.output
    (run,) = HFNetDB(str(isolated_db)).get_runs()
    assert run[3] == "invalid"


def test_missing_scenario_file_is_a_validation_error(tmp_path, toy_files):
    model, _ = toy_files
    result = runner.invoke(app, ["run", "--model", str(model), "--scenario", str(tmp_path / "absent.json")])
    assert result.exit_code == EXIT_VALIDATION


def test_toy_run_writes_outputs(tmp_path, toy_files):
    model, scenario = toy_files
    out = tmp_path / "out"
    result = runner.invoke(app, ["run", "--model", str(model), "--scenario", str(scenario), "--out", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    assert "status              optimal" in result.output
    assert (out / "objective.txt").read_text() == "10.00\n"

    report = json.loads((out / "run_report.json").read_text())
    assert report["status"] == "optimal"
    assert report["verification"]["passed"] is True
    assert "solve_time" not in report["solver"]
    for name in ("buffer_stocks.csv", "firings.csv", "costs.csv", "co2_by_resource.csv", "trajectory.csv"):
        assert (out / name).exists()
    assert not list(out.glob("*.tmp"))


def test_export_qp_option(tmp_path, toy_files):
    model, scenario = toy_files
    export = tmp_path / "qp"
    result = runner.invoke(app, [
        "run", "--model", str(model), "--scenario", str(scenario), "--dims-only", "--export-qp", str(export),
    ])
    assert result.exit_code == EXIT_OK
    assert {"A.mtx", "D.mtx", "F.mtx", "manifest.json"} <= {p.name for p in export.iterdir()}


def test_regress_freezes_a_passing_run(tmp_path, toy_files):
    model, scenario = toy_files
    goldens = tmp_path / "goldens.json"
    goldens.write_text(json.dumps({"scenarios": {}}), encoding="utf-8")

    result = runner.invoke(app, [
        "regress", "--model", str(model), "--scenarios-dir", str(scenario.parent),
        "--goldens", str(goldens), "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == EXIT_OK, result.output
    assert "1/1 pass" in result.output
    frozen = json.loads(goldens.read_text())["scenarios"]["toy"]["frozen"]
    assert frozen["objective"] == pytest.approx(10.0, abs=1e-4)
    assert frozen["total_co2"] == 0.0


def test_regress_without_scenarios(tmp_path, toy_files):
    model, _ = toy_files
    empty = tmp_path / "none"
    result = runner.invoke(app, ["regress", "--model", str(model), "--scenarios-dir", str(empty)])
    assert result.exit_code == EXIT_VALIDATION


def test_inspect_exports_the_nets(tmp_path, toy_files):
    model, _ = toy_files
    out = tmp_path / "inspect"
    result = runner.invoke(app, ["inspect", "--model", str(model), "--out", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    names = {p.name for p in out.iterdir()}
    assert {"esn.dot", "service_W.dot", "incidence_plus.txt", "capabilities.csv", "structure.json"} <= names


def test_history_lists_runs(toy_files):
    model, scenario = toy_files
    runner.invoke(app, ["run", "--model", str(model), "--scenario", str(scenario), "--dims-only"])
    result = runner.invoke(app, ["history", "--limit", "5"])
    assert result.exit_code == EXIT_OK
    lines = result.output.splitlines()
    assert lines[0].split()[:3] == ["run", "scenario", "status"]
    assert "dims-only" in lines[1]


def test_repeated_runs_write_identical_bytes(tmp_path, toy_files):
    model, scenario = toy_files
    outputs = []
    for name in ("out_a", "out_b"):
        out = tmp_path / name
        result = runner.invoke(app, ["run", "--model", str(model), "--scenario", str(scenario), "--out", str(out)])
        assert result.exit_code == EXIT_OK, result.output
        outputs.append(out)

    first, second = outputs
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    assert "run_report.json" in names
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_non_utf8_scenario_exits_with_validation_code(tmp_path, toy_files):
    model, _ = toy_files
    bad = tmp_path / "latin1.json"
    bad.write_bytes(b'{"schema_version": "1.0", "id": "caf\xe9", "horizon": 1}')
    result = runner.invoke(app, ["run", "--model", str(model), "--scenario", str(bad)])
    assert result.exit_code == EXIT_VALIDATION
    assert "not valid UTF-8 at byte 36" in result.output
