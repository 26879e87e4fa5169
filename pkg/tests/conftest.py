import json
from pathlib import Path

import pytest

from database.schema import HFNetDB
from hfgt.model_io import load_model, parse_model, parse_scenario
from hfgt.system import build_engineering_system

ROOT = Path(__file__).resolve().parent.parent
MODEL_PATH = ROOT / "input" / "h2_ng_model.json"
SCENARIOS_DIR = ROOT / "input" / "scenarios"
GOLDENS_PATH = ROOT / "input" / "goldens.json"


def toy_model_dict():
    """
    One operand, a well and a tank, two capabilities.

    pump@well injects water straight into the tank; serve@tank takes it
    out. The single service transition starts with serve and finishes
    with pump.
    """
    return {
        "schema_version": "1.0",
        "name": "toy",
        "operands": [{"id": "W", "name": "water", "unit": "t"}],
        "resources": [
            {"id": "well", "name": "well", "kind": "transformation"},
            {"id": "tank", "name": "tank", "kind": "independent-buffer"},
        ],
        "processes": [
            {"id": "pump", "name": "pump water", "outputs": {"W": 1.0}},
            {"id": "serve", "name": "serve water", "inputs": {"W": 1.0}},
        ],
        "capabilities": [
            {"process": "pump", "resource": "well", "linear_cost": 1.0,
             "flows": [{"operand": "W", "inject": "tank"}]},
            {"process": "serve", "resource": "tank", "linear_cost": 1.0},
        ],
        "boundary": {"inputs": ["pump@well"], "outputs": ["serve@tank"]},
        "service_nets": [
            {
                "operand": "W",
                "places": [{"id": "W_held", "initial": 0}],
                "transitions": [{"id": "W_cycle", "start": ["serve"], "finish": ["pump"]}],
            }
        ],
    }


def toy_scenario_dict(demand=5.0, horizon=1):
    return {
        "schema_version": "1.0",
        "id": "toy",
        "horizon": horizon,
        "demand": {"serve@tank": [demand] * horizon},
    }


@pytest.fixture
def toy_model():
    return parse_model(json.dumps(toy_model_dict()))


@pytest.fixture
def toy_system(toy_model):
    return build_engineering_system(toy_model)


@pytest.fixture
def toy_scenario(toy_model):
    return parse_scenario(json.dumps(toy_scenario_dict()), toy_model)


@pytest.fixture(scope="session")
def fixture_model():
    return load_model(MODEL_PATH)


@pytest.fixture(scope="session")
def fixture_system(fixture_model):
    return build_engineering_system(fixture_model)


@pytest.fixture
def zero_demand_scenario(fixture_model):
    """Scenario 1 with every demand and supply set to zero and nothing held at step 1."""
    data = json.loads((SCENARIOS_DIR / "scenario_1.json").read_text(encoding="utf-8"))
    data["id"] = "zero_demand"
    for section in ("demand", "supply"):
        data[section] = {key: [0.0] * len(values) for key, values in data.get(section, {}).items()}
    data.pop("initial_conditions", None)
    return parse_scenario(json.dumps(data), fixture_model)


@pytest.fixture
def db(tmp_path):
    return HFNetDB(str(tmp_path / "hfnet.db"))
