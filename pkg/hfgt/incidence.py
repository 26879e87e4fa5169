"""
Hetero-functional incidence tensors.

M⁻(i, y, ψ) records that capability ψ pulls operand i from buffer y and
M⁺(i, y, ψ) that it injects operand i into buffer y. Device models turn the
binary structure into physical quantities per firing.
"""

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from hfgt.errors import DeviceModelError, IncidenceError


@dataclass(frozen=True)
class IncidenceTensor3:
    """Sparse (operand × buffer × capability) tensor in sorted coordinate form."""

    shape: tuple
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(coords) != len(values):
            raise IncidenceError("coordinate and value counts differ")
        if len(coords):
            if (coords < 0).any() or (coords >= np.asarray(self.shape)).any():
                raise IncidenceError(f"tensor index out of range for shape {self.shape}")
            if (values < 0).any():
                raise IncidenceError("incidence weights must be non-negative")
        keep = values != 0
        coords, values = coords[keep], values[keep]
        order = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0]))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "coords", coords[order])
        object.__setattr__(self, "values", values[order])

    @classmethod
    def from_entries(cls, shape, entries: Mapping):
        """entries: {(i, y, psi): weight}"""
        if not entries:
            return cls(shape, np.zeros((0, 3), dtype=np.int64), np.zeros(0))
        keys = list(entries)
        return cls(shape, np.array(keys, dtype=np.int64), np.array([entries[k] for k in keys]))

    @property
    def nnz(self):
        return len(self.values)

    def get(self, i, y, psi):
        hit = np.flatnonzero(
            (self.coords[:, 0] == i) & (self.coords[:, 1] == y) & (self.coords[:, 2] == psi)
        )
        return float(self.values[hit[0]]) if len(hit) else 0.0

    def items(self):
        for (i, y, psi), w in zip(self.coords, self.values):
            yield (int(i), int(y), int(psi)), float(w)

    def to_dense(self):
        dense = np.zeros(self.shape)
        if self.nnz:
            dense[self.coords[:, 0], self.coords[:, 1], self.coords[:, 2]] = self.values
        return dense

    def is_binary(self):
        return bool(np.all(self.values == 1.0))


@dataclass(frozen=True)
class FlowDeclaration:
    """Operand `operand` is pulled from buffer `pull` and/or injected into `inject`."""

    operand: str
    pull: Optional[str] = None
    inject: Optional[str] = None


@dataclass(frozen=True)
class DeviceModelMatrices:
    """D⁺ (ejected) and D⁻ (consumed) ratios, σ(L) × σ(P)."""

    plus: sparse.csr_matrix
    minus: sparse.csr_matrix

    def __post_init__(self):
        if self.plus.shape != self.minus.shape:
            raise DeviceModelError("D+ and D- must have the same shape")
        for m in (self.plus, self.minus):
            if m.nnz and (m.data < 0).any():
                raise DeviceModelError("device-model ratios must be non-negative")
        object.__setattr__(self, "_plus_dense", self.plus.toarray())
        object.__setattr__(self, "_minus_dense", self.minus.toarray())

    @classmethod
    def from_ratios(cls, operands, processes, ratios: Mapping):
        """
        Args:
            operands: ordered Operand sequence (rows)
            processes: ordered Process sequence (columns)
            ratios: {process_id: {"inputs": {operand_id: r}, "outputs": {operand_id: r}}}

        Returns:
            DeviceModelMatrices
        """
        row_of = {o.id: i for i, o in enumerate(operands)}
        col_of = {p.id: w for w, p in enumerate(processes)}
        plus = sparse.lil_matrix((len(operands), len(processes)))
        minus = sparse.lil_matrix((len(operands), len(processes)))
        for process_id, spec in ratios.items():
            if process_id not in col_of:
                raise DeviceModelError(f"device model for undeclared process '{process_id}'")
            w = col_of[process_id]
            inputs = spec.get("inputs", {})
            outputs = spec.get("outputs", {})
            if not inputs and not outputs:
                raise DeviceModelError(f"process '{process_id}' has an empty device model")
            for target, side in ((minus, inputs), (plus, outputs)):
                for operand_id, ratio in side.items():
                    if operand_id not in row_of:
                        raise DeviceModelError(
                            f"process '{process_id}' references undeclared operand '{operand_id}'"
                        )
                    if ratio <= 0:
                        raise DeviceModelError(
                            f"process '{process_id}': ratio for '{operand_id}' must be positive"
                        )
                    target[row_of[operand_id], w] = ratio
        return cls(plus.tocsr(), minus.tocsr())

    @property
    def shape(self):
        return self.plus.shape

    def ratio(self, sign, i, w):
        dense = self._plus_dense if sign > 0 else self._minus_dense
        return float(dense[i, w])


@dataclass(frozen=True)
class FlattenedIncidence:
    """Row vec(i, y) = i·σ(B_S) + y (operand-major), one column per capability."""

    matrix: sparse.csr_matrix
    n_operands: int
    n_buffers: int

    def row_index(self, i, y):
        return i * self.n_buffers + y

    def row_of(self, row):
        return divmod(row, self.n_buffers)


def build_incidence_tensors(capabilities, buffers, operands, flows: Mapping[int, Sequence[FlowDeclaration]]):
    """
    Place every declared flow into the binary tensors.

    Args:
        capabilities: ordered Capability list
        buffers: B_S, ordered Resource list
        operands: ordered Operand list
        flows: capability index -> flow declarations

    Returns:
        (M⁺, M⁻) binary IncidenceTensor3 pair
    """
    operand_index = {o.id: i for i, o in enumerate(operands)}
    buffer_index = {b.id: y for y, b in enumerate(buffers)}
    shape = (len(operands), len(buffers), len(capabilities))
    plus, minus = {}, {}

    def _buffer(capability, buffer_id):
        if buffer_id not in buffer_index:
            raise IncidenceError(
                f"capability '{capability.id}' uses '{buffer_id}' as a buffer, "
                "but only transformation resources and independent buffers hold operands"
            )
        return buffer_index[buffer_id]

    for capability in capabilities:
        for flow in flows.get(capability.index, ()):
            if flow.operand not in operand_index:
                raise IncidenceError(
                    f"capability '{capability.id}' references undeclared operand '{flow.operand}'"
                )
            i = operand_index[flow.operand]
            if flow.pull is not None:
                minus[(i, _buffer(capability, flow.pull), capability.index)] = 1.0
            if flow.inject is not None:
                plus[(i, _buffer(capability, flow.inject), capability.index)] = 1.0

    return IncidenceTensor3.from_entries(shape, plus), IncidenceTensor3.from_entries(shape, minus)


def matricize(tensor: IncidenceTensor3):
    n_operands, n_buffers, n_capabilities = tensor.shape
    rows = tensor.coords[:, 0] * n_buffers + tensor.coords[:, 1]
    matrix = sparse.csr_matrix(
        (tensor.values, (rows, tensor.coords[:, 2])),
        shape=(n_operands * n_buffers, n_capabilities),
    )
    return FlattenedIncidence(matrix, n_operands, n_buffers)


def refine_with_device_models(plus, minus, device: DeviceModelMatrices, pmap):
    """
    Scale every binary entry by the ratio of its capability's process.

    The negative tensor takes D⁻ (consumed operands), the positive one D⁺.
    An entry without a declared ratio is rejected.
    """
    refined = []
    for sign, tensor in ((1, plus), (-1, minus)):
        values = np.empty(tensor.nnz)
        missing = []
        for n, ((i, y, psi), weight) in enumerate(tensor.items()):
            ratio = device.ratio(sign, i, pmap(psi))
            if ratio == 0.0:
                missing.append((i, y, psi))
            values[n] = weight * ratio
        if missing:
            label = "D+" if sign > 0 else "D-"
            raise DeviceModelError(
                f"{len(missing)} incidence entries have no {label} ratio, first at {missing[0]}",
                missing,
            )
        refined.append(IncidenceTensor3(tensor.shape, tensor.coords, values))
    return refined[0], refined[1]


def signed_nonzero_count(plus, minus):
    """Nonzeros of M⁺ − M⁻; storage self-loops cancel."""
    difference = matricize(plus).matrix - matricize(minus).matrix
    difference.eliminate_zeros()
    return difference.nnz


def tensor_frame(tensor, operands=None, buffers=None, capabilities=None):
    """Coordinate list (i, y, psi, weight) with optional labels."""
    frame = pd.DataFrame({
        "i": tensor.coords[:, 0],
        "y": tensor.coords[:, 1],
        "psi": tensor.coords[:, 2],
        "weight": tensor.values,
    })
    if operands is not None:
        frame["operand"] = [operands[i].id for i in frame["i"]]
    if buffers is not None:
        frame["buffer"] = [buffers[y].id for y in frame["y"]]
    if capabilities is not None:
        frame["capability"] = [capabilities[psi].id for psi in frame["psi"]]
    return frame


def export_coordinates(tensor, path, **labels):
    tensor_frame(tensor, **labels).to_csv(path, sep=" ", index=False, float_format="%.10g")
