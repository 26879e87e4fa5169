import json

import pytest

from hfgt.errors import ModelValidationError
from hfgt.model_io import (
    MODEL_SECTIONS,
    load_model,
    load_scenario,
    parse_model,
    parse_scenario,
    serialize_model,
    serialize_scenario,
)

from conftest import SCENARIOS_DIR, toy_model_dict, toy_scenario_dict


def _errors(text, parser=parse_model, *args):
    with pytest.raises(ModelValidationError) as info:
        parser(text, *args)
    return info.value.diagnostics


def test_empty_document_reports_every_missing_section():
    diagnostics = _errors("{}")
    assert {d.path for d in diagnostics} == set(MODEL_SECTIONS)
    assert all(d.message == "required section is missing" for d in diagnostics)


def test_invalid_json_is_located():
    (diagnostic,) = _errors('{\n  "name": "x",\n  oops\n}')
    assert diagnostic.line == 3
    assert "invalid JSON" in diagnostic.message


def test_duplicate_resource_is_reported_with_a_location():
    data = toy_model_dict()
    data["resources"].append({"id": "tank", "name": "second tank", "kind": "independent-buffer"})
    diagnostics = _errors(json.dumps(data, indent=2))
    duplicate = [d for d in diagnostics if "duplicate resource id 'tank'" in d.message]
    assert len(duplicate) == 1
    assert duplicate[0].path == "resources[2].id"
    assert duplicate[0].line is not None


def test_every_problem_is_collected():
    data = toy_model_dict()
    data["processes"][0]["outputs"] = {"W": -1.0}
    data["capabilities"].append({"process": "melt", "resource": "tank"})
    data["capabilities"].append({"store": "W", "resource": "tank"})
    diagnostics = _errors(json.dumps(data))
    messages = " | ".join(d.message for d in diagnostics)
    assert "ratio must be a positive number" in messages
    assert "undeclared process 'melt'" in messages
    assert "not listed in transport_operands" in messages


def test_reserved_ids_and_kinds():
    data = toy_model_dict()
    data["processes"].append({"id": "transport-W", "inputs": {"W": 1.0}})
    data["resources"].append({"id": "pipe", "kind": "conduit"})
    messages = [d.message for d in _errors(json.dumps(data))]
    assert any("reserved" in m for m in messages)
    assert any(m.startswith("must be one of") for m in messages)


def test_every_operand_needs_a_service_net():
    data = toy_model_dict()
    data["operands"].append({"id": "S", "name": "salt", "unit": "t"})
    messages = [d.message for d in _errors(json.dumps(data))]
    assert "operand 'S' has no service net" in messages


def test_unsupported_schema_version():
    data = toy_model_dict()
    data["schema_version"] = "2.0"
    (diagnostic,) = _errors(json.dumps(data))
    assert diagnostic.path == "schema_version"


def test_short_series_is_rejected(toy_model):
    data = toy_scenario_dict(horizon=20)
    data["demand"]["serve@tank"] = [1.0] * 19
    (diagnostic,) = _errors(json.dumps(data), parse_scenario, toy_model)
    assert diagnostic.path == "demand.serve@tank"
    assert "19 values, horizon is 20" in diagnostic.message


def test_scenario_references_are_checked_against_the_model(toy_model):
    data = toy_scenario_dict()
    data["supply"] = {"pump@nowhere": [1.0]}
    data["carbon_prices"] = {"tank": 10.0}
    messages = [d.message for d in _errors(json.dumps(data), parse_scenario, toy_model)]
    assert "unknown capability 'pump@nowhere'" in messages
    assert "the model declares no reporting.emission_operand" in messages


def test_scenario_without_model_skips_reference_checks():
    data = toy_scenario_dict()
    data["supply"] = {"pump@nowhere": [1.0]}
    scenario = parse_scenario(json.dumps(data))
    assert scenario.supply_series == {"pump@nowhere": (1.0,)}
    assert scenario.horizon == 1


def test_fixture_counts(fixture_model):
    assert len(fixture_model.operands) == 8
    assert len(fixture_model.resources) == 27
    assert len(fixture_model.processes) == 19
    assert len(fixture_model.capabilities) == 61
    assert len(fixture_model.service_nets) == 8
    assert fixture_model.transport_operands == ("H2", "CH4")
    assert fixture_model.boundary_inputs == ("import_power@N1",)
    assert fixture_model.emission_operand == "CO2"
    assert dict(fixture_model.balances) == {"gas": "CH4", "hydrogen": "H2"}


def test_fixture_survives_serialization(fixture_model):
    assert parse_model(serialize_model(fixture_model)) == fixture_model


def test_fixture_scenarios_load(fixture_model):
    for n in range(1, 5):
        scenario = load_scenario(SCENARIOS_DIR / f"scenario_{n}.json", fixture_model)
        assert scenario.id == f"scenario_{n}"
        assert scenario.horizon == 20
        assert parse_scenario(serialize_scenario(scenario), fixture_model) == scenario
    assert load_scenario(SCENARIOS_DIR / "scenario_4.json").prices == {"ALL": 500.0}


def test_non_utf8_bytes_are_located(tmp_path):
    path = tmp_path / "model.json"
    path.write_bytes(b'{\n  "name": "caf\xe9"\n}')
    with pytest.raises(ModelValidationError) as info:
        load_model(path)
    (diagnostic,) = info.value.diagnostics
    assert diagnostic.message.startswith("not valid UTF-8 at byte 16")
    assert (diagnostic.line, diagnostic.column) == (2, 15)


@pytest.mark.parametrize("value", ["NaN", "Infinity", "-Infinity"])
def test_non_finite_costs_are_rejected(value):
    text = json.dumps(toy_model_dict()).replace('"linear_cost": 1.0', f'"linear_cost": {value}', 1)
    (diagnostic,) = _errors(text)
    assert diagnostic.path == "capabilities[0].linear_cost"
    assert diagnostic.message == "must be finite"
    assert diagnostic.line == 1


def test_infinite_capacity_means_unbounded(toy_model):
    text = json.dumps(toy_model_dict()).replace('"linear_cost": 1.0', '"linear_cost": 1.0, "capacity": Infinity', 1)
    model = parse_model(text)
    assert model.capabilities[0].capacity == float("inf")

    text = json.dumps(toy_model_dict()).replace('"linear_cost": 1.0', '"linear_cost": 1.0, "capacity": NaN', 1)
    (diagnostic,) = _errors(text)
    assert diagnostic.message == "must be finite or Infinity"


def test_non_finite_ratios_series_and_prices_are_rejected(toy_model):
    data = toy_model_dict()
    data["processes"][0]["outputs"] = {"W": float("nan")}
    diagnostics = _errors(json.dumps(data))
    assert ("processes[0].outputs.W", "device-model ratio must be a positive number") in {
        (d.path, d.message) for d in diagnostics
    }

    data = toy_scenario_dict()
    data["demand"]["serve@tank"] = [float("inf")]
    data["cost_overrides"] = {"serve@tank": {"capacity": float("inf"), "linear_cost": float("nan")}}
    diagnostics = _errors(json.dumps(data), parse_scenario, toy_model)
    assert {(d.path, d.message) for d in diagnostics} == {
        ("demand.serve@tank", "values must be finite non-negative numbers"),
        ("cost_overrides.serve@tank.linear_cost", "must be finite"),
    }


def test_non_finite_conditions_are_rejected(toy_system):
    data = toy_scenario_dict()
    data["initial_conditions"] = {"buffers": {"W@tank": float("nan")}}
    scenario = parse_scenario(json.dumps(data), toy_system.document)
    with pytest.raises(ModelValidationError) as info:
        toy_system.conditions(scenario)
    (diagnostic,) = info.value.diagnostics
    assert diagnostic.path == "initial_conditions.buffers.W@tank"
