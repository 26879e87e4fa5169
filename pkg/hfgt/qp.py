"""
Hetero-functional network minimum cost flow as a sparse convex QP.

    minimize    xᵀ F x + fᵀ x
    subject to  A x = b,  D x ≤ e,  x ≥ 0

The decision vector stacks, for every step k = 1..K+1, the segments
[Q_B; Q_E; Q_SL; Q_EL; U⁺; U⁻; U_L⁺; U_L⁻].
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import io as sio
from scipy import sparse

from hfgt.errors import CompilationError, DimensionError, HFGTError

SEGMENTS = ("q_b", "q_e", "q_sl", "q_el", "u_plus", "u_minus", "u_l_plus", "u_l_minus")
EPSILON = 1e-9


@dataclass(frozen=True)
class NetDimensions:
    n_operands: int
    n_buffers: int
    n_capabilities: int
    n_service_places: int
    n_service_transitions: int

    @property
    def n_q_b(self):
        return self.n_operands * self.n_buffers

    def segment_lengths(self):
        e, el = self.n_capabilities, self.n_service_transitions
        return {
            "q_b": self.n_q_b, "q_e": e, "q_sl": self.n_service_places, "q_el": el,
            "u_plus": e, "u_minus": e, "u_l_plus": el, "u_l_minus": el,
        }


@dataclass(frozen=True)
class DecisionVectorLayout:
    horizon: int
    dims: NetDimensions

    def __post_init__(self):
        if self.horizon < 0:
            raise DimensionError("horizon must be non-negative")
        lengths = self.dims.segment_lengths()
        offsets, at = {}, 0
        for name in SEGMENTS:
            offsets[name] = at
            at += lengths[name]
        object.__setattr__(self, "_lengths", lengths)
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_step", at)

    @property
    def step_size(self):
        return self._step

    @property
    def steps(self):
        return self.horizon + 1

    @property
    def size(self):
        return self.steps * self._step

    def length(self, segment):
        return self._lengths[segment]

    def offset(self, segment, k):
        """First index of `segment` at step k (1-based)."""
        if not 1 <= k <= self.steps:
            raise IndexError(f"step {k} outside 1..{self.steps}")
        return (k - 1) * self._step + self._offsets[segment]

    def index(self, segment, k, j):
        if not 0 <= j < self._lengths[segment]:
            raise IndexError(f"{segment}[{j}] out of range")
        return self.offset(segment, k) + j

    def slice(self, segment, k):
        start = self.offset(segment, k)
        return slice(start, start + self._lengths[segment])

    def locate(self, idx):
        """Inverse of `index`: (segment, k, j)."""
        if not 0 <= idx < self.size:
            raise IndexError(f"index {idx} outside the decision vector")
        k, within = divmod(idx, self._step)
        for name in reversed(SEGMENTS):
            if within >= self._offsets[name] and self._lengths[name]:
                return name, k + 1, within - self._offsets[name]
        raise IndexError(idx)

    def series(self, x, segment):
        """(K+1) × length array of one segment across steps."""
        x = np.asarray(x)
        return np.vstack([x[self.slice(segment, k)] for k in range(1, self.steps + 1)])

    def offsets(self):
        return dict(self._offsets)


def layout(dims: NetDimensions, horizon: int):
    return DecisionVectorLayout(horizon, dims)


@dataclass(frozen=True)
class BoundaryData:
    """Supply pins U⁺ of input transitions, demand pins U⁻ of output transitions."""

    n_capabilities: int
    inputs: tuple
    outputs: tuple
    supply: np.ndarray
    demand: np.ndarray

    def __post_init__(self):
        supply = np.asarray(self.supply, dtype=float).reshape(-1, len(self.inputs)) if self.inputs else np.zeros((0, 0))
        demand = np.asarray(self.demand, dtype=float).reshape(-1, len(self.outputs)) if self.outputs else np.zeros((0, 0))
        if (supply < 0).any() or (demand < 0).any():
            raise DimensionError("supply and demand values must be non-negative")
        object.__setattr__(self, "supply", supply)
        object.__setattr__(self, "demand", demand)

    @classmethod
    def empty(cls, n_capabilities):
        return cls(n_capabilities, (), (), np.zeros((0, 0)), np.zeros((0, 0)))

    def _selector(self, selected):
        n = len(selected)
        return sparse.csr_matrix(
            (np.ones(n), (np.arange(n), list(selected))), shape=(n, self.n_capabilities)
        )

    @property
    def d_bp(self):
        return self._selector(self.inputs)

    @property
    def d_bn(self):
        return self._selector(self.outputs)

    def check_horizon(self, horizon):
        for label, values, selected in (("supply", self.supply, self.inputs), ("demand", self.demand, self.outputs)):
            if selected and values.shape[0] < horizon:
                raise DimensionError(
                    f"{label} series cover {values.shape[0]} steps, horizon is {horizon}"
                )


@dataclass(frozen=True)
class InitialFinalConditions:
    """
    Initial (step 1) and final (step K+1) values with masks of constrained
    entries. Masked-out entries are left free.
    """

    c_b1: np.ndarray
    c_e1: np.ndarray
    c_sl1: np.ndarray
    c_bk: np.ndarray
    c_ek: np.ndarray
    c_slk: np.ndarray
    initial_mask: dict = field(default_factory=dict)
    final_mask: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("c_b1", "c_e1", "c_sl1", "c_bk", "c_ek", "c_slk"):
            values = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(values)) or (values < 0).any():
                raise DimensionError(f"{name} must be finite and non-negative")
            object.__setattr__(self, name, values)
        defaults_initial = {"q_b": self.c_b1, "q_e": self.c_e1, "q_sl": self.c_sl1}
        defaults_final = {
            "q_b": self.c_bk, "q_e": self.c_ek, "q_sl": self.c_slk,
            "u_minus": self.c_ek, "u_l_minus": None,
        }
        for masks, defaults in ((self.initial_mask, defaults_initial), (self.final_mask, defaults_final)):
            for name, values in defaults.items():
                if name not in masks and values is not None:
                    masks[name] = np.ones(len(values), dtype=bool)

    @classmethod
    def zeros(cls, dims: NetDimensions):
        return cls(
            np.zeros(dims.n_q_b), np.zeros(dims.n_capabilities), np.zeros(dims.n_service_places),
            np.zeros(dims.n_q_b), np.zeros(dims.n_capabilities), np.zeros(dims.n_service_places),
        )


@dataclass(frozen=True)
class CapacityData:
    capacity: np.ndarray
    unsupplied_inputs: tuple = ()

    def __post_init__(self):
        capacity = np.asarray(self.capacity, dtype=float)
        if (capacity < 0).any():
            raise DimensionError("capacities must be non-negative")
        object.__setattr__(self, "capacity", capacity)

    @property
    def d_cp(self):
        n = len(self.unsupplied_inputs)
        return sparse.csr_matrix(
            (np.ones(n), (np.arange(n), list(self.unsupplied_inputs))),
            shape=(n, len(self.capacity)),
        )


@dataclass(frozen=True)
class CostData:
    linear: np.ndarray
    quadratic: np.ndarray


@dataclass(frozen=True)
class RowBlock:
    name: str
    k: Optional[int]
    start: int
    stop: int

    @property
    def label(self):
        return self.name if self.k is None else f"{self.name}[k={self.k}]"

    @property
    def rows(self):
        return self.stop - self.start


@dataclass
class QPProblem:
    F: sparse.csr_matrix
    f: np.ndarray
    A: sparse.csr_matrix
    b: np.ndarray
    D: sparse.csr_matrix
    e: np.ndarray
    layout: DecisionVectorLayout
    equality_blocks: list
    inequality_blocks: list
    report: dict = field(default_factory=dict)

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ (self.F @ x) + self.f @ x)


class _RowBuilder:
    """Accumulates COO triplets row block by row block."""

    def __init__(self, n_cols):
        self.n_cols = n_cols
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = []
        self.blocks = []
        self.n_rows = 0

    def add(self, name, k, matrices, rhs):
        """matrices: list of (sparse block, column offset, sign)."""
        n = len(rhs)
        for block, col0, sign in matrices:
            coo = sparse.coo_matrix(block)
            if coo.shape[0] != n:
                raise DimensionError(f"{name}: block has {coo.shape[0]} rows, expected {n}")
            self.rows.append(coo.row + self.n_rows)
            self.cols.append(coo.col + col0)
            self.vals.append(sign * coo.data)
        self.rhs.append(np.asarray(rhs, dtype=float))
        self.blocks.append(RowBlock(name, k, self.n_rows, self.n_rows + n))
        self.n_rows += n

    def build(self):
        if self.rows:
            rows, cols, vals = (np.concatenate(a) for a in (self.rows, self.cols, self.vals))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_cols))
        rhs = np.concatenate(self.rhs) if self.rhs else np.zeros(0)
        return matrix, rhs, self.blocks


def _eye(n):
    return sparse.identity(n, format="csr")


def _masked_eye(mask):
    keep = np.flatnonzero(mask)
    return sparse.csr_matrix(
        (np.ones(len(keep)), (np.arange(len(keep)), keep)), shape=(len(keep), len(mask))
    ), keep


def _diagonal_mask(mask):
    keep = np.flatnonzero(mask)
    return sparse.csr_matrix((np.ones(len(keep)), (keep, keep)), shape=(len(mask), len(mask)))


def creation_transitions(service):
    """Service transitions no capability start realizes: they only ever finish."""
    return np.diff(sparse.csr_matrix(service.sync_minus).indptr) == 0


def assemble_equalities(nets, service, boundary: BoundaryData, icfc: InitialFinalConditions, lay: DecisionVectorLayout):
    """
    Args:
        nets: color-split engineering system net (PlaceTransitionNet) with
            refined incidence and durations
        service: ServiceBlock
        boundary: BoundaryData
        icfc: InitialFinalConditions
        lay: DecisionVectorLayout

    Returns:
        (A, b, row blocks)
    """
    K = lay.horizon
    dims = lay.dims
    e, sl, el = dims.n_capabilities, dims.n_service_places, dims.n_service_transitions
    boundary.check_horizon(K)
    builder = _RowBuilder(lay.size)
    m_plus, m_minus = nets.m_plus, nets.m_minus
    d_bp, d_bn = boundary.d_bp, boundary.d_bn
    durations = nets.durations

    for k in range(1, K + 1):
        off = lambda segment, step=k: lay.offset(segment, step)

        builder.add("esn_places", k, [
            (_eye(dims.n_q_b), off("q_b", k + 1), -1.0),
            (_eye(dims.n_q_b), off("q_b"), 1.0),
            (m_plus, off("u_plus"), 1.0),
            (m_minus, off("u_minus"), -1.0),
        ], np.zeros(dims.n_q_b))

        builder.add("esn_transitions", k, [
            (_eye(e), off("q_e", k + 1), -1.0),
            (_eye(e), off("q_e"), 1.0),
            (_eye(e), off("u_plus"), -1.0),
            (_eye(e), off("u_minus"), 1.0),
        ], np.zeros(e))

        # finish k_d steps later; a start whose finish falls past K+1 is pinned to zero
        rows, cols, vals = [], [], []
        for psi in range(e):
            finish = k + int(durations[psi])
            if finish <= K + 1:
                rows.append(psi)
                cols.append(lay.index("u_plus", finish, psi))
                vals.append(-1.0)
            rows.append(psi)
            cols.append(lay.index("u_minus", k, psi))
            vals.append(1.0)
        coupling = sparse.csr_matrix((vals, (rows, cols)), shape=(e, lay.size))
        builder.add("duration", k, [(coupling, 0, 1.0)], np.zeros(e))

        builder.add("service_places", k, [
            (_eye(sl), off("q_sl", k + 1), -1.0),
            (_eye(sl), off("q_sl"), 1.0),
            (service.m_plus, off("u_l_plus"), 1.0),
            (service.m_minus, off("u_l_minus"), -1.0),
        ], np.zeros(sl))

        builder.add("service_transitions", k, [
            (_eye(el), off("q_el", k + 1), -1.0),
            (_eye(el), off("q_el"), 1.0),
            (_eye(el), off("u_l_plus"), -1.0),
            (_eye(el), off("u_l_minus"), 1.0),
        ], np.zeros(el))

        builder.add("sync_plus", k, [
            (_eye(el), off("u_l_plus"), 1.0),
            (service.sync_plus, off("u_plus"), -1.0),
        ], np.zeros(el))

        builder.add("sync_minus", k, [
            (_eye(el), off("u_l_minus"), 1.0),
            (service.sync_minus, off("u_minus"), -1.0),
        ], np.zeros(el))

        supply = boundary.supply[k - 1] if boundary.inputs else np.zeros(0)
        demand = boundary.demand[k - 1] if boundary.outputs else np.zeros(0)
        builder.add("boundary", k, [
            (sparse.vstack([d_bp, sparse.csr_matrix((len(boundary.outputs), e))]), off("u_plus"), 1.0),
            (sparse.vstack([sparse.csr_matrix((len(boundary.inputs), e)), d_bn]), off("u_minus"), 1.0),
        ], np.concatenate([supply, demand]))

    initial = {"q_b": icfc.c_b1, "q_e": icfc.c_e1, "q_sl": icfc.c_sl1}
    for segment, values in initial.items():
        selector, keep = _masked_eye(icfc.initial_mask[segment])
        builder.add(f"initial.{segment}", None, [(selector, lay.offset(segment, 1), 1.0)], values[keep])

    # Terminal firings are zero. With x ≥ 0 one row pins a sum of terms, so the
    # same rows also pin finishes at K+1 that no duration row reaches and the
    # service transition markings: at step 1, or at K+1 for creation transitions.
    creation = creation_transitions(service)
    companions = {
        "u_minus": [(_diagonal_mask(np.asarray(durations) == 0), lay.offset("u_plus", K + 1))],
        "u_l_minus": [
            (_eye(el), lay.offset("u_l_plus", K + 1)),
            (_diagonal_mask(~creation), lay.offset("q_el", 1)),
            (_diagonal_mask(creation), lay.offset("q_el", K + 1)),
        ],
    }
    final = {
        "q_b": icfc.c_bk, "q_e": icfc.c_ek, "u_minus": np.zeros(e),
        "q_sl": icfc.c_slk, "u_l_minus": np.zeros(el),
    }
    for segment, values in final.items():
        mask = icfc.final_mask.get(segment, np.ones(len(values), dtype=bool))
        selector, keep = _masked_eye(mask)
        terms = [(selector, lay.offset(segment, K + 1), 1.0)]
        terms += [(selector @ block, col0, 1.0) for block, col0 in companions.get(segment, ())]
        builder.add(f"final.{segment}", None, terms, values[keep])

    return builder.build()


def assemble_inequalities(capacity: CapacityData, lay: DecisionVectorLayout):
    """Per k = 1..K+1: D_Cp U⁺[k] ≤ C_U(inputs), U⁻[k] ≤ C_U."""
    e = lay.dims.n_capabilities
    if len(capacity.capacity) != e:
        raise DimensionError(f"{len(capacity.capacity)} capacities for {e} capabilities")
    builder = _RowBuilder(lay.size)
    d_cp = capacity.d_cp
    input_caps = capacity.capacity[list(capacity.unsupplied_inputs)]
    for k in range(1, lay.steps + 1):
        builder.add("input_capacity", k, [(d_cp, lay.offset("u_plus", k), 1.0)], input_caps)
        builder.add("capacity", k, [(_eye(e), lay.offset("u_minus", k), 1.0)], capacity.capacity)
    D, e_vec, blocks = builder.build()
    # unbounded capacities carry no information; a large finite bound keeps solvers happy
    e_vec = np.where(np.isfinite(e_vec), e_vec, 1e12)
    return D, e_vec, blocks


def assemble_objective(costs: CostData, lay: DecisionVectorLayout, epsilon=EPSILON):
    """
    Costs accrue on U⁻ (starts) for k = 1..K. F entries below ε are raised to ε.
    """
    if epsilon <= 0:
        raise DimensionError("epsilon must be positive")
    linear = np.asarray(costs.linear, dtype=float)
    quadratic = np.asarray(costs.quadratic, dtype=float)
    if (linear < 0).any() or (quadratic < 0).any():
        bad = int(np.flatnonzero((linear < 0) | (quadratic < 0))[0])
        raise DimensionError(f"capability {bad} has a negative cost coefficient")
    diagonal = np.zeros(lay.size)
    f = np.zeros(lay.size)
    for k in range(1, lay.horizon + 1):
        s = lay.slice("u_minus", k)
        diagonal[s] = quadratic
        f[s] = linear
    diagonal = np.maximum(diagonal, epsilon)
    return sparse.diags(diagonal, format="csr"), f


def equality_row_formula(dims: NetDimensions, horizon, n_inputs, n_outputs):
    """Expected row count of every equality family, before masking."""
    K = horizon
    e, sl, el = dims.n_capabilities, dims.n_service_places, dims.n_service_transitions
    return {
        "esn_places": K * dims.n_q_b,
        "esn_transitions": K * e,
        "duration": K * e,
        "service_places": K * sl,
        "service_transitions": K * el,
        "sync_plus": K * el,
        "sync_minus": K * el,
        "boundary": K * (n_inputs + n_outputs),
        "initial": dims.n_q_b + e + sl,
        "final": dims.n_q_b + 2 * e + sl + el,
    }


def _family(block_name):
    return block_name.split(".")[0]


def reconcile(problem: QPProblem, dims: NetDimensions, boundary: BoundaryData, capacity: CapacityData, durations,
              creation=()):
    """Dimension report: actual sizes against the closed-form identities."""
    lay = problem.layout
    K = lay.horizon
    formula = equality_row_formula(dims, K, len(boundary.inputs), len(boundary.outputs))
    actual = {name: 0 for name in formula}
    for block in problem.equality_blocks:
        actual[_family(block.name)] += block.rows
    pinned = [
        {"capability": psi, "k": k}
        for k in range(1, K + 1)
        for psi, k_d in enumerate(durations)
        if k + int(k_d) > K + 1
    ]
    e, sl, el = dims.n_capabilities, dims.n_service_places, dims.n_service_transitions
    return {
        "horizon": K,
        "sizes": {
            "operands": dims.n_operands,
            "buffers": dims.n_buffers,
            "q_b": dims.n_q_b,
            "capabilities": e,
            "service_places": sl,
            "service_transitions": el,
            "inputs": len(boundary.inputs),
            "outputs": len(boundary.outputs),
            "unsupplied_inputs": len(capacity.unsupplied_inputs),
        },
        "sigma_x": {
            "actual": lay.size,
            "formula": (K + 1) * (dims.n_q_b + 3 * e + sl + 3 * el),
            "alternate_reading": (K + 1) * (dims.n_buffers + 3 * e + sl + 3 * el),
        },
        "sigma_A": {
            "actual": problem.A.shape[0],
            "formula": sum(formula.values()),
            "blocks": {
                name: {"formula": formula[name], "actual": actual[name], "delta": actual[name] - formula[name]}
                for name in formula
            },
            "pinned_duration_rows": pinned,
            # extra terms carried by the final.u_minus and final.u_l_minus rows
            "terminal_terms": {
                "u_plus_zero_duration": int(np.sum(np.asarray(durations) == 0)),
                "q_el_step_1": int(len(creation) - np.sum(creation)),
                "q_el_step_K1": int(np.sum(creation)),
            },
        },
        "sigma_D": {
            "actual": problem.D.shape[0],
            "formula": (K + 1) * (len(capacity.unsupplied_inputs) + e),
        },
        "nnz": {
            "A": int(problem.A.nnz),
            "D": int(problem.D.nnz),
            "F": int(problem.F.nnz),
            "f": int(np.count_nonzero(problem.f)),
        },
    }


def compile_problem(system, scenario, epsilon=EPSILON):
    """
    Compose boundary data, conditions, capacities and costs of a scenario
    with a built engineering system.

    Args:
        system: hfgt.system.EngineeringSystem
        scenario: hfgt.model_io.ScenarioDocument

    Returns:
        QPProblem with a reconciliation report
    """
    stage = "layout"
    try:
        dims = system.dimensions
        lay = layout(dims, scenario.horizon)
        stage = "boundary"
        boundary = system.boundary_data(scenario)
        stage = "conditions"
        icfc = system.conditions(scenario)
        stage = "capacity"
        capacity = system.capacity_data(scenario)
        stage = "costs"
        costs = system.cost_data(scenario)
        stage = "equalities"
        A, b, eq_blocks = assemble_equalities(system.ptn, system.service, boundary, icfc, lay)
        stage = "inequalities"
        D, e, ineq_blocks = assemble_inequalities(capacity, lay)
        stage = "objective"
        F, f = assemble_objective(costs, lay, epsilon)
    except HFGTError as exc:
        raise CompilationError(stage, exc) from exc

    problem = QPProblem(F, f, A, b, D, e, lay, eq_blocks, ineq_blocks)
    problem.report = reconcile(problem, dims, boundary, capacity, system.ptn.durations,
                               creation_transitions(system.service))
    problem.report["epsilon"] = epsilon
    problem.report["scenario"] = scenario.id
    return problem


def _write_vector(path, values):
    with open(path, "w") as fh:
        fh.write(f"{len(values)}\n")
        for idx in np.flatnonzero(values):
            fh.write(f"{idx} {values[idx]:.17g}\n")


def export_qp(problem: QPProblem, directory):
    """
    Write F, A, D as MatrixMarket files, f, b, e as coordinate lists
    (length line, then `index value` for nonzeros) and a manifest.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("F", "A", "D"):
        sio.mmwrite(str(directory / f"{name}.mtx"), getattr(problem, name).tocoo(), precision=17)
    for name in ("f", "b", "e"):
        _write_vector(directory / f"{name}.txt", getattr(problem, name))
    lay = problem.layout
    manifest = {
        "format": "hfnet-qp/1",
        "objective": "x'Fx + f'x",
        "size": lay.size,
        "horizon": lay.horizon,
        "step_size": lay.step_size,
        "segments": {
            name: {"offset": off, "length": lay.length(name)} for name, off in lay.offsets().items()
        },
        "equality_rows": problem.A.shape[0],
        "inequality_rows": problem.D.shape[0],
        "equality_blocks": [[b.label, b.start, b.stop] for b in problem.equality_blocks],
        "inequality_blocks": [[b.label, b.start, b.stop] for b in problem.inequality_blocks],
        "report": problem.report,
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
    return directory


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return None if math.isinf(value) else float(value)
    raise TypeError(f"not serializable: {type(value).__name__}")
