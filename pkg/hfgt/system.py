"""
From a validated ModelDocument to the compiled nets: system concept,
capabilities, incidence tensors, the engineering system net and the
service block, plus the scenario-dependent QP inputs.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd
from scipy import sparse

from hfgt.core import (
    Process,
    ProcessKind,
    SystemConcept,
    classify_buffers,
    enumerate_capabilities,
    process_capability_map,
    refined_transport_processes,
)
from hfgt.errors import Diagnostic, ModelValidationError
from hfgt.incidence import (
    DeviceModelMatrices,
    FlowDeclaration,
    build_incidence_tensors,
    refine_with_device_models,
    signed_nonzero_count,
)
from hfgt.model_io import ALL_RESOURCES, ModelDocument, ScenarioDocument
from hfgt.petri import ACColoredPetriNet, accpn_to_ptn
from hfgt.qp import BoundaryData, CapacityData, CostData, InitialFinalConditions, NetDimensions
from hfgt.service import ServiceNet, build_feasibility, build_sync_matrices, concat_services


def default_flows(spec, process_spec=None):
    """Flows implied by a capability record when it declares none."""
    if spec.flows is not None:
        return list(spec.flows)
    if spec.kind == "store":
        return [FlowDeclaration(spec.operand, spec.resource, spec.resource)]
    if spec.kind == "transport":
        return [FlowDeclaration(spec.operand, spec.origin, spec.destination)]
    inputs = dict(process_spec.inputs)
    outputs = dict(process_spec.outputs)
    flows = []
    for operand_id in list(inputs) + [o for o in outputs if o not in inputs]:
        flows.append(FlowDeclaration(
            operand_id,
            pull=spec.resource if operand_id in inputs else None,
            inject=spec.resource if operand_id in outputs else None,
        ))
    return flows


@dataclass(frozen=True, eq=False)
class EngineeringSystem:
    document: ModelDocument
    operands: tuple
    resources: tuple
    buffers: tuple
    processes: tuple
    concept: SystemConcept
    capabilities: tuple
    pmap: object
    device: DeviceModelMatrices
    tensors: tuple
    refined: tuple
    esn: ACColoredPetriNet
    ptn: object
    service_nets: tuple
    feasibility: tuple
    syncs: tuple
    service: object

    @cached_property
    def capability_index(self):
        return {c.id: c.index for c in self.capabilities}

    @property
    def dimensions(self):
        return NetDimensions(
            n_operands=len(self.operands),
            n_buffers=len(self.buffers),
            n_capabilities=len(self.capabilities),
            n_service_places=self.service.n_places,
            n_service_transitions=self.service.n_transitions,
        )

    @cached_property
    def emission_capabilities(self):
        """Capabilities whose process only removes the emission operand from the system."""
        operand = self.document.emission_operand
        if operand is None:
            return ()
        exporters = {
            p.id for p in self.document.processes
            if dict(p.inputs).keys() == {operand} and not p.outputs
        }
        return tuple(c.index for c in self.capabilities if c.process.id in exporters)

    def _lookup(self, ids, section):
        errors, indices = [], []
        for cid in ids:
            if cid in self.capability_index:
                indices.append(self.capability_index[cid])
            else:
                errors.append(Diagnostic(f"{section}.{cid}", f"unknown capability '{cid}'"))
        if errors:
            raise ModelValidationError(errors)
        return indices

    def boundary_data(self, scenario: ScenarioDocument):
        K = scenario.horizon
        supply = dict(scenario.supply)
        demand = dict(scenario.demand)
        inputs = sorted(self._lookup(supply, "supply"))
        outputs = sorted(self._lookup(demand, "demand"))
        by_index = {c.index: c.id for c in self.capabilities}
        supply_rows = np.array([supply[by_index[i]] for i in inputs], dtype=float).T.reshape(K, len(inputs))
        demand_rows = np.array([demand[by_index[i]] for i in outputs], dtype=float).T.reshape(K, len(outputs))
        return BoundaryData(len(self.capabilities), tuple(inputs), tuple(outputs), supply_rows, demand_rows)

    def capacity_data(self, scenario: ScenarioDocument):
        capacity = np.array([c.capacity for c in self.capabilities], dtype=float)
        for cid, values in scenario.cost_overrides:
            if "capacity" in dict(values):
                capacity[self._lookup([cid], "cost_overrides")[0]] = dict(values)["capacity"]
        supplied = set(dict(scenario.supply))
        unsupplied = sorted(
            self.capability_index[cid] for cid in self.document.boundary_inputs if cid not in supplied
        )
        return CapacityData(capacity, tuple(unsupplied))

    def cost_data(self, scenario: ScenarioDocument):
        linear = np.array([c.linear_cost for c in self.capabilities], dtype=float)
        quadratic = np.array([c.quadratic_cost for c in self.capabilities], dtype=float)
        for cid, values in scenario.cost_overrides:
            psi = self._lookup([cid], "cost_overrides")[0]
            values = dict(values)
            linear[psi] = values.get("linear_cost", linear[psi])
            quadratic[psi] = values.get("quadratic_cost", quadratic[psi])
        prices = scenario.prices
        for psi in self.emission_capabilities:
            resource_id = self.capabilities[psi].resource.id
            if resource_id in prices:
                linear[psi] = prices[resource_id]
            elif ALL_RESOURCES in prices:
                linear[psi] = prices[ALL_RESOURCES]
        return CostData(linear, quadratic)

    def conditions(self, scenario: ScenarioDocument):
        """Zero initial and final markings, overridden by the scenario."""
        icfc = InitialFinalConditions.zeros(self.dimensions)
        icfc.c_sl1[:] = self.service.q0
        place_index = {name: n for n, name in enumerate(self.ptn.places)}
        service_index = {pid: n for n, (_, pid) in enumerate(self.service.place_labels)}
        groups = {
            "buffers": ("q_b", place_index),
            "transitions": ("q_e", self.capability_index),
            "service_places": ("q_sl", service_index),
        }
        errors = []
        for section, targets in (
            ("initial_conditions", {"q_b": icfc.c_b1, "q_e": icfc.c_e1, "q_sl": icfc.c_sl1}),
            ("final_conditions", {"q_b": icfc.c_bk, "q_e": icfc.c_ek, "q_sl": icfc.c_slk}),
        ):
            overrides = getattr(scenario, section)
            for group, (segment, index) in groups.items():
                for key, value in dict(overrides.get(group, {})).items():
                    if key not in index:
                        errors.append(Diagnostic(f"{section}.{group}.{key}", "unknown entry"))
                        continue
                    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                        errors.append(Diagnostic(f"{section}.{group}.{key}", "must be a finite non-negative number"))
                        continue
                    targets[segment][index[key]] = float(value)
            if section == "final_conditions":
                for group, keys in dict(overrides.get("free", {})).items():
                    if group not in groups:
                        errors.append(Diagnostic(f"{section}.free.{group}", "unknown group"))
                        continue
                    segment, index = groups[group]
                    for key in keys:
                        if key not in index:
                            errors.append(Diagnostic(f"{section}.free.{group}.{key}", "unknown entry"))
                            continue
                        icfc.final_mask[segment][index[key]] = False
        if errors:
            raise ModelValidationError(errors)
        return icfc

    def capability_frame(self):
        return pd.DataFrame({
            "psi": [c.index for c in self.capabilities],
            "capability": [c.id for c in self.capabilities],
            "process": [c.process.id for c in self.capabilities],
            "resource": [c.resource.id for c in self.capabilities],
            "duration": [c.duration for c in self.capabilities],
            "capacity": [c.capacity for c in self.capabilities],
            "linear_cost": [c.linear_cost for c in self.capabilities],
            "quadratic_cost": [c.quadratic_cost for c in self.capabilities],
        })

    def structural_report(self):
        plus, minus = self.tensors
        joint = plus.nnz + minus.nnz
        signed = signed_nonzero_count(plus, minus)
        stores = sum(1 for c in self.capabilities if c.process.is_storage)
        return {
            "model": self.document.name,
            "operands": len(self.operands),
            "resources": len(self.resources),
            "resource_kinds": {
                kind: sum(1 for r in self.resources if r.kind.value == kind)
                for kind in ("transformation", "independent-buffer", "transportation")
            },
            "processes": len(self.processes),
            "system_concept": {"shape": list(self.concept.shape), "nnz": self.concept.nnz},
            "capabilities": len(self.capabilities),
            "buffers": len(self.buffers),
            "incidence": {
                "shape": list(plus.shape),
                "nnz_plus": plus.nnz,
                "nnz_minus": minus.nnz,
                "nnz_joint": joint,
                "nnz_signed": signed,
                "note": (
                    f"the joint count of M+ and M- is {joint}; the signed sum M+ - M- has {signed} "
                    f"nonzeros because the {stores} storage self-loops cancel"
                ),
            },
            "device_models": {"shape": list(self.device.shape)},
            "esn": {"places": len(self.ptn.places), "transitions": len(self.ptn.transitions)},
            "service": {
                "nets": len(self.service_nets),
                "places": self.service.n_places,
                "transitions": self.service.n_transitions,
            },
            "conventions": [
                "the negative tensor is refined with consumption ratios (D-), the positive with ejection ratios (D+)",
                "capabilities are ordered resource-major, process-minor over the system concept",
            ],
        }


def build_engineering_system(doc: ModelDocument):
    operands = list(doc.operands)
    resources = list(doc.resources)
    buffers = classify_buffers(resources)

    processes = [Process(p.id, p.name, ProcessKind.TRANSFORMATION) for p in doc.processes]
    processes += refined_transport_processes(doc.transport_operands, buffers)

    concept = SystemConcept.from_pairs(
        processes, resources, [(c.process_id, c.resource) for c in doc.capabilities]
    )
    specs = {(c.process_id, c.resource): c for c in doc.capabilities}
    capabilities = enumerate_capabilities(concept, {key: c.attributes() for key, c in specs.items()})
    pmap = process_capability_map(capabilities, processes)

    ratios = {p.id: p.ratios for p in doc.processes}
    for p in processes:
        if p.kind is ProcessKind.REFINED_TRANSPORTATION:
            ratios[p.id] = {"inputs": {p.operand: 1.0}, "outputs": {p.operand: 1.0}}
    device = DeviceModelMatrices.from_ratios(operands, processes, ratios)

    process_specs = {p.id: p for p in doc.processes}
    flows = {}
    for capability in capabilities:
        spec = specs[(capability.process.id, capability.resource.id)]
        flows[capability.index] = default_flows(spec, process_specs.get(spec.process))
    tensors = build_incidence_tensors(capabilities, buffers, operands, flows)
    refined = refine_with_device_models(*tensors, device, pmap)

    esn = ACColoredPetriNet(
        places=tuple(b.id for b in buffers),
        transitions=tuple(c.id for c in capabilities),
        colors=tuple(o.id for o in operands),
        plus=refined[0],
        minus=refined[1],
        durations=np.array([c.duration for c in capabilities], dtype=np.int64),
    )
    ptn = accpn_to_ptn(esn)

    operand_position = {o.id: i for i, o in enumerate(operands)}
    nets, feasibility, syncs = [], [], []
    for spec in sorted(doc.service_nets, key=lambda s: operand_position[s.operand]):
        place_row = {p.id: n for n, p in enumerate(spec.places)}
        m_plus = sparse.lil_matrix((len(spec.places), len(spec.transitions)))
        m_minus = sparse.lil_matrix((len(spec.places), len(spec.transitions)))
        for x, t in enumerate(spec.transitions):
            for ref in t.produces:
                m_plus[place_row[ref], x] = 1
            for ref in t.consumes:
                m_minus[place_row[ref], x] = 1
        net = ServiceNet(
            operand=spec.operand,
            places=tuple(p.id for p in spec.places),
            transitions=tuple(t.id for t in spec.transitions),
            m_plus=m_plus.tocsr(),
            m_minus=m_minus.tocsr(),
            q0=np.array([p.initial for p in spec.places], dtype=float),
        )
        realizes = {t.id: {"start": t.start, "finish": t.finish} for t in spec.transitions}
        lam = build_feasibility(net, capabilities, realizes)
        nets.append(net)
        feasibility.append(lam)
        syncs.append(build_sync_matrices(lam, device, pmap, operand_position[spec.operand]))
    service = concat_services(nets, syncs, [o.id for o in operands])

    return EngineeringSystem(
        document=doc,
        operands=tuple(operands),
        resources=tuple(resources),
        buffers=tuple(buffers),
        processes=tuple(processes),
        concept=concept,
        capabilities=tuple(capabilities),
        pmap=pmap,
        device=device,
        tensors=tuple(tensors),
        refined=tuple(refined),
        esn=esn,
        ptn=ptn,
        service_nets=tuple(nets),
        feasibility=tuple(feasibility),
        syncs=tuple(syncs),
        service=service,
    )
