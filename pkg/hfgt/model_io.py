"""
Model and scenario documents.

Both are UTF-8 JSON with a `schema_version`; the grammar is documented in
docs/model_schema.md. Parsing collects every problem before failing, and
each diagnostic carries the line and column of the offending value when it
can be found in the source text.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from hfgt.core import Operand, Resource, ResourceKind, transport_process_id
from hfgt.errors import Diagnostic, ModelValidationError
from hfgt.incidence import FlowDeclaration
from hfgt.service import TRANSPORT_TOKEN

SCHEMA_VERSION = "1.0"
MODEL_SECTIONS = ("schema_version", "name", "operands", "resources", "processes", "capabilities", "service_nets")
SCENARIO_SECTIONS = ("schema_version", "id", "horizon")
ALL_RESOURCES = "ALL"


@dataclass(frozen=True)
class ProcessSpec:
    id: str
    name: str
    inputs: tuple = ()
    outputs: tuple = ()

    @property
    def ratios(self):
        return {"inputs": dict(self.inputs), "outputs": dict(self.outputs)}


@dataclass(frozen=True)
class CapabilitySpec:
    """One capability record: a transformation process, a store or a transport."""

    kind: str
    resource: str
    process: Optional[str] = None
    operand: Optional[str] = None
    origin: Optional[str] = None
    destination: Optional[str] = None
    duration: int = 0
    capacity: float = math.inf
    linear_cost: float = 0.0
    quadratic_cost: float = 0.0
    flows: Optional[tuple] = None
    note: Optional[str] = None

    @property
    def process_id(self):
        if self.kind == "process":
            return self.process
        if self.kind == "store":
            return transport_process_id(self.operand, self.resource, self.resource)
        return transport_process_id(self.operand, self.origin, self.destination)

    @property
    def id(self):
        return f"{self.process_id}@{self.resource}"

    def attributes(self):
        return {
            "duration": self.duration,
            "capacity": self.capacity,
            "linear_cost": self.linear_cost,
            "quadratic_cost": self.quadratic_cost,
        }


@dataclass(frozen=True)
class ServicePlaceSpec:
    id: str
    name: str
    initial: float = 0.0


@dataclass(frozen=True)
class ServiceTransitionSpec:
    id: str
    name: str
    consumes: tuple = ()
    produces: tuple = ()
    start: tuple = ()
    finish: tuple = ()


@dataclass(frozen=True)
class ServiceNetSpec:
    operand: str
    places: tuple
    transitions: tuple


@dataclass(frozen=True)
class ModelDocument:
    schema_version: str
    name: str
    operands: tuple
    resources: tuple
    processes: tuple
    capabilities: tuple
    service_nets: tuple
    transport_operands: tuple = ()
    boundary_inputs: tuple = ()
    boundary_outputs: tuple = ()
    emission_operand: Optional[str] = None
    balances: tuple = ()
    description: str = ""
    notes: tuple = ()


@dataclass(frozen=True)
class ScenarioDocument:
    schema_version: str
    id: str
    horizon: int
    name: str = ""
    description: str = ""
    supply: tuple = ()
    demand: tuple = ()
    carbon_prices: tuple = ()
    cost_overrides: tuple = ()
    initial_conditions: dict = field(default_factory=dict)
    final_conditions: dict = field(default_factory=dict)

    @property
    def supply_series(self):
        return dict(self.supply)

    @property
    def demand_series(self):
        return dict(self.demand)

    @property
    def prices(self):
        return dict(self.carbon_prices)


class _Checker:
    """Collects diagnostics and locates them in the source text."""

    def __init__(self, text):
        self.text = text
        self.diagnostics = []

    def locate(self, needle, occurrence=1):
        if needle is None:
            return None, None
        at = -1
        for _ in range(occurrence):
            at = self.text.find(needle, at + 1)
            if at < 0:
                return None, None
        line = self.text.count("\n", 0, at) + 1
        column = at - self.text.rfind("\n", 0, at)
        return line, column

    def error(self, path, message, value=None, occurrence=1):
        needle = None if value is None else json.dumps(value)
        line, column = self.locate(needle, occurrence)
        self.diagnostics.append(Diagnostic(path, message, line, column))

    def raise_if_any(self):
        if self.diagnostics:
            raise ModelValidationError(self.diagnostics)

    def load(self, kind):
        try:
            data = json.loads(self.text)
        except json.JSONDecodeError as e:
            raise ModelValidationError([Diagnostic("$", f"invalid JSON: {e.msg}", e.lineno, e.colno)])
        if not isinstance(data, dict):
            raise ModelValidationError([Diagnostic("$", f"a {kind} document must be a JSON object", 1, 1)])
        return data

    def string(self, record, key, path, required=True):
        value = record.get(key)
        if value is None:
            if required:
                self.error(f"{path}.{key}", "is required")
            return None
        if not isinstance(value, str) or not value:
            self.error(f"{path}.{key}", "must be a non-empty string", value)
            return None
        return value

    def number(self, record, key, path, default, minimum=0.0, integer=False, unbounded=False):
        value = record.get(key, default)
        if value is None:
            return default
        if not _is_number(value):
            self.error(f"{path}.{key}", "must be a number", value)
            return default
        if not _is_finite(value, unbounded):
            self.error(f"{path}.{key}", "must be finite or Infinity" if unbounded else "must be finite", value)
            return default
        if integer and int(value) != value:
            self.error(f"{path}.{key}", "must be an integer", value)
            return default
        if minimum is not None and value < minimum:
            self.error(f"{path}.{key}", f"must be >= {minimum:g}", value)
            return default
        return int(value) if integer else float(value)

    def array(self, record, key, path, required=False):
        value = record.get(key)
        if value is None:
            if required:
                self.error(f"{path}.{key}", "is required")
            return []
        if not isinstance(value, list):
            self.error(f"{path}.{key}", "must be an array")
            return []
        return value

    def mapping(self, record, key, path):
        value = record.get(key)
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.error(f"{path}.{key}", "must be an object")
            return {}
        return value

    def unique(self, ids, path, what):
        seen = {}
        for n, value in enumerate(ids):
            if value is None:
                continue
            seen[value] = seen.get(value, 0) + 1
            if seen[value] == 2:
                self.error(f"{path}[{n}].id", f"duplicate {what} id '{value}'", value, occurrence=2)


def _check_version(checker, data):
    version = data.get("schema_version")
    if version is None:
        return
    if not isinstance(version, str) or version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        checker.error("schema_version", f"unsupported schema version (expected {SCHEMA_VERSION})", version)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_finite(value, unbounded=False):
    """NaN never passes; +Infinity only where the schema allows an unbounded value."""
    return math.isfinite(value) or (unbounded and value == math.inf)


def _parse_ratios(checker, raw, path, operand_ids):
    if raw is None:
        return ()
    if not isinstance(raw, dict):
        checker.error(path, "must be an object of operand -> ratio")
        return ()
    ratios = []
    for operand_id, ratio in raw.items():
        if operand_id not in operand_ids:
            checker.error(f"{path}.{operand_id}", f"undeclared operand '{operand_id}'", operand_id)
            continue
        if not _is_number(ratio) or not math.isfinite(ratio) or ratio <= 0:
            checker.error(f"{path}.{operand_id}", "device-model ratio must be a positive number", ratio)
            continue
        ratios.append((operand_id, float(ratio)))
    return tuple(ratios)


def parse_model(text):
    """
    Parse and cross-reference a model document.

    Args:
        text: UTF-8 JSON text

    Returns:
        ModelDocument

    Raises:
        ModelValidationError listing every problem found
    """
    checker = _Checker(text)
    data = checker.load("model")
    for section in MODEL_SECTIONS:
        if section not in data:
            checker.diagnostics.append(Diagnostic(section, "required section is missing"))
    _check_version(checker, data)
    checker.raise_if_any()

    operands = []
    for n, raw in enumerate(checker.array(data, "operands", "$", required=True)):
        path = f"operands[{n}]"
        if not isinstance(raw, dict):
            checker.error(path, "must be an object")
            continue
        oid = checker.string(raw, "id", path)
        name = checker.string(raw, "name", path, required=False) or oid
        unit = checker.string(raw, "unit", path)
        operands.append(Operand(oid, name, unit) if oid and unit else None)
    checker.unique([o.id if o else None for o in operands], "operands", "operand")
    operands = [o for o in operands if o]
    operand_ids = {o.id for o in operands}

    resources = []
    kinds = {k.value: k for k in ResourceKind}
    for n, raw in enumerate(checker.array(data, "resources", "$", required=True)):
        path = f"resources[{n}]"
        if not isinstance(raw, dict):
            checker.error(path, "must be an object")
            continue
        rid = checker.string(raw, "id", path)
        name = checker.string(raw, "name", path, required=False) or rid
        kind = raw.get("kind")
        if kind not in kinds:
            checker.error(f"{path}.kind", f"must be one of {', '.join(kinds)}", kind)
            continue
        node = raw.get("node")
        resources.append(Resource(rid, name, kinds[kind], None if node is None else str(node)) if rid else None)
    checker.unique([r.id if r else None for r in resources], "resources", "resource")
    resources = [r for r in resources if r]
    resource_by_id = {r.id: r for r in resources}

    processes = []
    for n, raw in enumerate(checker.array(data, "processes", "$", required=True)):
        path = f"processes[{n}]"
        if not isinstance(raw, dict):
            checker.error(path, "must be an object")
            continue
        pid = checker.string(raw, "id", path)
        if pid and pid.startswith("transport-"):
            checker.error(f"{path}.id", "ids starting with 'transport-' are reserved", pid)
        inputs = _parse_ratios(checker, raw.get("inputs"), f"{path}.inputs", operand_ids)
        outputs = _parse_ratios(checker, raw.get("outputs"), f"{path}.outputs", operand_ids)
        if not raw.get("inputs") and not raw.get("outputs"):
            checker.error(path, "a process needs at least one input or output ratio", pid)
        name = checker.string(raw, "name", path, required=False) or pid
        processes.append(ProcessSpec(pid, name, inputs, outputs) if pid else None)
    checker.unique([p.id if p else None for p in processes], "processes", "process")
    processes = [p for p in processes if p]
    process_ids = {p.id for p in processes}

    transport_operands = []
    for n, operand_id in enumerate(checker.array(data, "transport_operands", "$")):
        if operand_id not in operand_ids:
            checker.error(f"transport_operands[{n}]", f"undeclared operand '{operand_id}'", operand_id)
        else:
            transport_operands.append(operand_id)

    capabilities = []
    for n, raw in enumerate(checker.array(data, "capabilities", "$", required=True)):
        spec = _parse_capability(checker, raw, f"capabilities[{n}]", resource_by_id, process_ids,
                                 operand_ids, set(transport_operands))
        if spec is not None:
            capabilities.append(spec)
    cap_ids = [c.id for c in capabilities]
    seen = set()
    for n, cid in enumerate(cap_ids):
        if cid in seen:
            checker.error(f"capabilities[{n}]", f"capability '{cid}' declared twice")
        seen.add(cid)

    boundary = checker.mapping(data, "boundary", "$")
    boundary_ids = {}
    for side in ("inputs", "outputs"):
        boundary_ids[side] = []
        for n, cid in enumerate(checker.array(boundary, side, "boundary")):
            if cid not in seen:
                checker.error(f"boundary.{side}[{n}]", f"unknown capability '{cid}'", cid)
            else:
                boundary_ids[side].append(cid)

    service_nets = _parse_service_nets(checker, data, operand_ids, process_ids, set(transport_operands))

    reporting = checker.mapping(data, "reporting", "$")
    emission = reporting.get("emission_operand")
    if emission is not None and emission not in operand_ids:
        checker.error("reporting.emission_operand", f"undeclared operand '{emission}'", emission)
    balances = []
    for label, operand_id in checker.mapping(reporting, "balances", "reporting").items():
        if operand_id not in operand_ids:
            checker.error(f"reporting.balances.{label}", f"undeclared operand '{operand_id}'", operand_id)
        else:
            balances.append((label, operand_id))

    notes = [str(n) for n in checker.array(data, "notes", "$")]
    checker.raise_if_any()
    return ModelDocument(
        schema_version=data["schema_version"],
        name=data["name"],
        description=data.get("description", ""),
        operands=tuple(operands),
        resources=tuple(resources),
        processes=tuple(processes),
        capabilities=tuple(capabilities),
        service_nets=tuple(service_nets),
        transport_operands=tuple(transport_operands),
        boundary_inputs=tuple(boundary_ids["inputs"]),
        boundary_outputs=tuple(boundary_ids["outputs"]),
        emission_operand=emission,
        balances=tuple(balances),
        notes=tuple(notes),
    )


def _parse_capability(checker, raw, path, resource_by_id, process_ids, operand_ids, transport_operands):
    if not isinstance(raw, dict):
        checker.error(path, "must be an object")
        return None
    kinds = [k for k in ("process", "store", "transport") if k in raw]
    if len(kinds) != 1:
        checker.error(path, "needs exactly one of 'process', 'store' or 'transport'")
        return None
    kind = kinds[0]
    rid = checker.string(raw, "resource", path)
    resource = resource_by_id.get(rid)
    if rid and resource is None:
        checker.error(f"{path}.resource", f"undeclared resource '{rid}'", rid)
    valid = resource is not None

    process = operand = origin = destination = None
    if kind == "process":
        process = checker.string(raw, "process", path)
        if process and process not in process_ids:
            checker.error(f"{path}.process", f"undeclared process '{process}'", process)
            valid = False
        if resource is not None and not resource.is_buffer:
            checker.error(f"{path}.resource", "transformation processes run on buffers, not transportation resources", rid)
            valid = False
    else:
        operand = checker.string(raw, kind, path)
        if operand and operand not in transport_operands:
            checker.error(f"{path}.{kind}", f"'{operand}' is not listed in transport_operands", operand)
            valid = False
        if kind == "store":
            if resource is not None and not resource.is_buffer:
                checker.error(f"{path}.resource", "storage needs a buffer resource", rid)
                valid = False
        else:
            if resource is not None and resource.is_buffer:
                checker.error(f"{path}.resource", "transport needs a transportation resource", rid)
                valid = False
            origin = checker.string(raw, "origin", path)
            destination = checker.string(raw, "destination", path)
            for key, bid in (("origin", origin), ("destination", destination)):
                buffer = resource_by_id.get(bid)
                if bid and (buffer is None or not buffer.is_buffer):
                    checker.error(f"{path}.{key}", f"'{bid}' is not a declared buffer", bid)
                    valid = False
            if origin and origin == destination:
                checker.error(path, "a transport needs distinct origin and destination; use 'store'", origin)
                valid = False

    flows = None
    if "flows" in raw:
        flows = []
        for n, flow in enumerate(checker.array(raw, "flows", path)):
            fpath = f"{path}.flows[{n}]"
            if not isinstance(flow, dict) or flow.get("operand") not in operand_ids:
                checker.error(fpath, "needs a declared 'operand'")
                valid = False
                continue
            flows.append(FlowDeclaration(flow["operand"], flow.get("pull"), flow.get("inject")))
        flows = tuple(flows)

    note = raw.get("note")
    spec = CapabilitySpec(
        kind=kind,
        resource=rid,
        process=process,
        operand=operand,
        origin=origin,
        destination=destination,
        duration=checker.number(raw, "duration", path, 0, integer=True),
        capacity=checker.number(raw, "capacity", path, math.inf, unbounded=True),
        linear_cost=checker.number(raw, "linear_cost", path, 0.0),
        quadratic_cost=checker.number(raw, "quadratic_cost", path, 0.0),
        flows=flows,
        note=None if note is None else str(note),
    )
    return spec if valid and rid else None


def _parse_service_nets(checker, data, operand_ids, process_ids, transport_operands):
    nets = []
    covered = set()
    place_ids, transition_ids = [], []
    for n, raw in enumerate(checker.array(data, "service_nets", "$", required=True)):
        path = f"service_nets[{n}]"
        if not isinstance(raw, dict):
            checker.error(path, "must be an object")
            continue
        operand = checker.string(raw, "operand", path)
        if operand and operand not in operand_ids:
            checker.error(f"{path}.operand", f"undeclared operand '{operand}'", operand)
            continue
        if operand in covered:
            checker.error(f"{path}.operand", f"second service net for '{operand}'", operand, occurrence=2)
            continue
        covered.add(operand)

        places = []
        for m, place in enumerate(checker.array(raw, "places", path, required=True)):
            ppath = f"{path}.places[{m}]"
            if not isinstance(place, dict):
                checker.error(ppath, "must be an object")
                continue
            pid = checker.string(place, "id", ppath)
            initial = checker.number(place, "initial", ppath, 0.0)
            if pid:
                places.append(ServicePlaceSpec(pid, place.get("name", pid), initial))
        local_places = {p.id for p in places}
        place_ids.extend(p.id for p in places)

        transitions = []
        for m, transition in enumerate(checker.array(raw, "transitions", path)):
            tpath = f"{path}.transitions[{m}]"
            if not isinstance(transition, dict):
                checker.error(tpath, "must be an object")
                continue
            tid = checker.string(transition, "id", tpath)
            arcs = {}
            for key in ("consumes", "produces"):
                arcs[key] = tuple(checker.array(transition, key, tpath))
                for ref in arcs[key]:
                    if ref not in local_places:
                        checker.error(f"{tpath}.{key}", f"'{ref}' is not a place of this net", ref)
            realized = {}
            for key in ("start", "finish"):
                realized[key] = tuple(checker.array(transition, key, tpath))
                for ref in realized[key]:
                    if ref == TRANSPORT_TOKEN:
                        if operand not in transport_operands:
                            checker.error(f"{tpath}.{key}", f"'{operand}' has no transport processes", ref)
                    elif ref not in process_ids:
                        checker.error(f"{tpath}.{key}", f"undeclared process '{ref}'", ref)
            if tid:
                transitions.append(ServiceTransitionSpec(
                    tid, transition.get("name", tid), arcs["consumes"], arcs["produces"],
                    realized["start"], realized["finish"],
                ))
        transition_ids.extend(t.id for t in transitions)
        nets.append(ServiceNetSpec(operand, tuple(places), tuple(transitions)))

    checker.unique(place_ids, "service_nets.places", "service place")
    checker.unique(transition_ids, "service_nets.transitions", "service transition")
    for operand in sorted(operand_ids - covered):
        checker.error("service_nets", f"operand '{operand}' has no service net")
    return nets


def _series(checker, raw, path, horizon):
    series = []
    for key, values in raw.items():
        spath = f"{path}.{key}"
        if not isinstance(values, list):
            checker.error(spath, "must be an array of per-step values", key)
            continue
        if horizon is not None and len(values) != horizon:
            checker.error(spath, f"has {len(values)} values, horizon is {horizon}", key)
            continue
        bad = [v for v in values if not _is_number(v) or not math.isfinite(v) or v < 0]
        if bad:
            checker.error(spath, "values must be finite non-negative numbers", key)
            continue
        series.append((key, tuple(float(v) for v in values)))
    return tuple(series)


def parse_scenario(text, model: Optional[ModelDocument] = None):
    """
    Parse a scenario; with `model`, also check that every referenced
    capability and resource exists.

    Raises:
        ModelValidationError listing every problem found
    """
    checker = _Checker(text)
    data = checker.load("scenario")
    for section in SCENARIO_SECTIONS:
        if section not in data:
            checker.diagnostics.append(Diagnostic(section, "required section is missing"))
    _check_version(checker, data)
    checker.raise_if_any()

    horizon = checker.number(data, "horizon", "$", None, integer=True)
    supply = _series(checker, checker.mapping(data, "supply", "$"), "supply", horizon)
    demand = _series(checker, checker.mapping(data, "demand", "$"), "demand", horizon)

    prices = []
    for key, price in checker.mapping(data, "carbon_prices", "$").items():
        if not _is_number(price) or not math.isfinite(price) or price < 0:
            checker.error(f"carbon_prices.{key}", "price must be a finite non-negative number", key)
        else:
            prices.append((key, float(price)))

    overrides = []
    for key, raw in checker.mapping(data, "cost_overrides", "$").items():
        if not isinstance(raw, dict):
            checker.error(f"cost_overrides.{key}", "must be an object", key)
            continue
        values = {}
        for field_name in ("linear_cost", "quadratic_cost", "capacity"):
            if field_name in raw:
                values[field_name] = checker.number(
                    raw, field_name, f"cost_overrides.{key}", 0.0, unbounded=field_name == "capacity"
                )
        overrides.append((key, tuple(sorted(values.items()))))

    initial = checker.mapping(data, "initial_conditions", "$")
    final = checker.mapping(data, "final_conditions", "$")

    if model is not None:
        cap_ids = {c.id for c in model.capabilities}
        resource_ids = {r.id for r in model.resources} | {ALL_RESOURCES}
        for section, entries in (("supply", supply), ("demand", demand), ("cost_overrides", overrides)):
            for key, _ in entries:
                if key not in cap_ids:
                    checker.error(f"{section}.{key}", f"unknown capability '{key}'", key)
        for key, _ in prices:
            if key not in resource_ids:
                checker.error(f"carbon_prices.{key}", f"unknown resource '{key}'", key)
        if prices and model.emission_operand is None:
            checker.error("carbon_prices", "the model declares no reporting.emission_operand")

    checker.raise_if_any()
    return ScenarioDocument(
        schema_version=data["schema_version"],
        id=data["id"],
        horizon=horizon,
        name=data.get("name", ""),
        description=data.get("description", ""),
        supply=supply,
        demand=demand,
        carbon_prices=tuple(prices),
        cost_overrides=tuple(overrides),
        initial_conditions=initial,
        final_conditions=final,
    )


def _finite(value):
    return None if math.isinf(value) else value


def model_to_dict(doc: ModelDocument):
    capabilities = []
    for c in doc.capabilities:
        record = {c.kind: c.process if c.kind == "process" else c.operand, "resource": c.resource}
        if c.kind == "transport":
            record["origin"] = c.origin
            record["destination"] = c.destination
        record.update({
            "duration": c.duration,
            "capacity": _finite(c.capacity),
            "linear_cost": c.linear_cost,
            "quadratic_cost": c.quadratic_cost,
        })
        if c.flows is not None:
            record["flows"] = [
                {k: v for k, v in (("operand", f.operand), ("pull", f.pull), ("inject", f.inject)) if v is not None}
                for f in c.flows
            ]
        if c.note is not None:
            record["note"] = c.note
        capabilities.append(record)

    data = {
        "schema_version": doc.schema_version,
        "name": doc.name,
        "description": doc.description,
        "notes": list(doc.notes),
        "operands": [{"id": o.id, "name": o.name, "unit": o.unit} for o in doc.operands],
        "resources": [
            {k: v for k, v in (("id", r.id), ("name", r.name), ("kind", r.kind.value), ("node", r.node)) if v is not None}
            for r in doc.resources
        ],
        "processes": [
            {"id": p.id, "name": p.name, "inputs": dict(p.inputs), "outputs": dict(p.outputs)}
            for p in doc.processes
        ],
        "transport_operands": list(doc.transport_operands),
        "capabilities": capabilities,
        "boundary": {"inputs": list(doc.boundary_inputs), "outputs": list(doc.boundary_outputs)},
        "service_nets": [
            {
                "operand": net.operand,
                "places": [{"id": p.id, "name": p.name, "initial": p.initial} for p in net.places],
                "transitions": [
                    {
                        "id": t.id, "name": t.name,
                        "consumes": list(t.consumes), "produces": list(t.produces),
                        "start": list(t.start), "finish": list(t.finish),
                    }
                    for t in net.transitions
                ],
            }
            for net in doc.service_nets
        ],
        "reporting": {"emission_operand": doc.emission_operand, "balances": dict(doc.balances)},
    }
    if doc.emission_operand is None:
        del data["reporting"]["emission_operand"]
    return data


def serialize_model(doc: ModelDocument):
    return json.dumps(model_to_dict(doc), indent=2) + "\n"


def serialize_scenario(doc: ScenarioDocument):
    data = {
        "schema_version": doc.schema_version,
        "id": doc.id,
        "name": doc.name,
        "description": doc.description,
        "horizon": doc.horizon,
        "supply": {k: list(v) for k, v in doc.supply},
        "demand": {k: list(v) for k, v in doc.demand},
        "carbon_prices": dict(doc.carbon_prices),
        "cost_overrides": {k: dict(v) for k, v in doc.cost_overrides},
        "initial_conditions": doc.initial_conditions,
        "final_conditions": doc.final_conditions,
    }
    return json.dumps(data, indent=2) + "\n"


def read_document(path):
    """
    Read a document as UTF-8.

    Raises:
        ModelValidationError at the first byte that does not decode
    """
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line = raw.count(b"\n", 0, e.start) + 1
        column = e.start - raw.rfind(b"\n", 0, e.start)
        raise ModelValidationError([
            Diagnostic("$", f"not valid UTF-8 at byte {e.start}: {e.reason}", line, column)
        ]) from e


def load_model(path):
    return parse_model(read_document(path))


def load_scenario(path, model=None):
    return parse_scenario(read_document(path), model)
