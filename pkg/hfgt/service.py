"""
Service nets: one place-transition net per operand tracking its state, tied
to the engineering system net by feasibility and synchronization matrices.
"""

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from hfgt.errors import DeviceModelError, DimensionError

# Realization token standing for every refined-transport process of the operand.
TRANSPORT_TOKEN = "@transport"


def _binary(matrix, label):
    m = sparse.csr_matrix(matrix, dtype=float)
    m.eliminate_zeros()
    if m.nnz and not np.all(m.data == 1):
        raise DimensionError(f"{label} entries must be 0 or 1")
    return m


@dataclass(frozen=True)
class ServiceNet:
    operand: str
    places: tuple
    transitions: tuple
    m_plus: sparse.csr_matrix
    m_minus: sparse.csr_matrix
    q0: np.ndarray = None

    def __post_init__(self):
        shape = (len(self.places), len(self.transitions))
        for label in ("m_plus", "m_minus"):
            m = _binary(getattr(self, label), f"service net {self.operand} {label}")
            if m.shape != shape:
                raise DimensionError(
                    f"service net {self.operand}: {label} is {m.shape}, expected {shape}"
                )
            object.__setattr__(self, label, m)
        q0 = np.zeros(shape[0]) if self.q0 is None else np.asarray(self.q0, dtype=float)
        if q0.shape != (shape[0],) or (q0 < 0).any():
            raise DimensionError(f"service net {self.operand}: bad initial marking")
        object.__setattr__(self, "q0", q0)


@dataclass(frozen=True)
class ServiceFeasibilityMatrix:
    """Λ̃⁺ / Λ̃⁻: which service transition a capability's finish / start realizes."""

    operand: str
    plus: sparse.csr_matrix
    minus: sparse.csr_matrix

    def __post_init__(self):
        for label in ("plus", "minus"):
            m = _binary(getattr(self, label), f"feasibility {self.operand} {label}")
            per_column = np.asarray(m.sum(axis=0)).reshape(-1)
            if (per_column > 1).any():
                psi = int(np.flatnonzero(per_column > 1)[0])
                raise DimensionError(
                    f"feasibility {self.operand} {label}: capability {psi} "
                    "realizes more than one service transition"
                )
            object.__setattr__(self, label, m)


@dataclass(frozen=True)
class SynchronizationMatrix:
    operand: str
    plus: sparse.csr_matrix
    minus: sparse.csr_matrix


@dataclass(frozen=True)
class ServiceBlock:
    """
    All service nets stacked in operand order.

    place_labels / transition_labels give the operand and local id of every
    row of Q_SL / Q_EL; offsets[i] is where operand i's block starts.
    """

    operands: tuple
    place_labels: tuple
    transition_labels: tuple
    place_offsets: tuple
    transition_offsets: tuple
    m_plus: sparse.csr_matrix
    m_minus: sparse.csr_matrix
    sync_plus: sparse.csr_matrix
    sync_minus: sparse.csr_matrix
    q0: np.ndarray

    @property
    def n_places(self):
        return len(self.place_labels)

    @property
    def n_transitions(self):
        return len(self.transition_labels)

    def operand_places(self, operand_id):
        i = self.operands.index(operand_id)
        return range(self.place_offsets[i], self.place_offsets[i + 1])


def build_feasibility(net: ServiceNet, capabilities, realizes: Mapping[str, Mapping[str, Sequence[str]]]):
    """
    Args:
        net: the operand's service net
        capabilities: ordered Capability list
        realizes: service transition id -> {"start": process ids, "finish": process ids};
            TRANSPORT_TOKEN expands to the operand's refined-transport processes

    Returns:
        ServiceFeasibilityMatrix
    """
    plus = sparse.lil_matrix((len(net.transitions), len(capabilities)))
    minus = sparse.lil_matrix((len(net.transitions), len(capabilities)))

    def _matches(capability, process_ids):
        process = capability.process
        if TRANSPORT_TOKEN in process_ids and process.operand == net.operand:
            return True
        return process.id in process_ids

    for x, transition_id in enumerate(net.transitions):
        spec = realizes.get(transition_id, {})
        starts = set(spec.get("start", ()))
        finishes = set(spec.get("finish", ()))
        for capability in capabilities:
            if starts and _matches(capability, starts):
                minus[x, capability.index] = 1
            if finishes and _matches(capability, finishes):
                plus[x, capability.index] = 1
    return ServiceFeasibilityMatrix(net.operand, plus.tocsr(), minus.tocsr())


def build_sync_matrices(feasibility: ServiceFeasibilityMatrix, device, pmap, operand_index):
    """
    Λ̂±(x, ψ) = Λ̃±(x, ψ) · D±(i, pmap(ψ)).

    A feasible pair whose process has no ratio for operand i is rejected.
    """
    scaled = []
    for sign, matrix in ((1, feasibility.plus), (-1, feasibility.minus)):
        coo = matrix.tocoo()
        values, missing = [], []
        for x, psi in zip(coo.row, coo.col):
            ratio = device.ratio(sign, operand_index, pmap(int(psi)))
            if ratio == 0.0:
                missing.append((int(x), int(psi)))
            values.append(ratio)
        if missing:
            label = "D+" if sign > 0 else "D-"
            raise DeviceModelError(
                f"service {feasibility.operand}: {len(missing)} feasible pairs lack a {label} "
                f"ratio, first (transition, capability) = {missing[0]}",
                missing,
            )
        scaled.append(sparse.csr_matrix((values, (coo.row, coo.col)), shape=matrix.shape))
    return SynchronizationMatrix(feasibility.operand, scaled[0], scaled[1])


def concat_services(nets: Sequence[ServiceNet], syncs: Sequence[SynchronizationMatrix], operand_ids=None):
    """
    Block-diagonal service incidence and stacked synchronization matrices.

    Args:
        nets: one ServiceNet per operand
        syncs: matching SynchronizationMatrix list
        operand_ids: required operand order; defaults to the order of `nets`

    Returns:
        ServiceBlock
    """
    operand_ids = tuple(n.operand for n in nets) if operand_ids is None else tuple(operand_ids)
    by_operand = {n.operand: n for n in nets}
    sync_by_operand = {s.operand: s for s in syncs}
    missing = [o for o in operand_ids if o not in by_operand or o not in sync_by_operand]
    if missing:
        raise DimensionError(f"no service net for operand(s): {', '.join(missing)}")
    extra = sorted(set(by_operand) - set(operand_ids))
    if extra:
        raise DimensionError(f"service nets for undeclared operand(s): {', '.join(extra)}")

    ordered = [by_operand[o] for o in operand_ids]
    ordered_syncs = [sync_by_operand[o] for o in operand_ids]
    place_offsets = tuple(np.cumsum([0] + [len(n.places) for n in ordered]).tolist())
    transition_offsets = tuple(np.cumsum([0] + [len(n.transitions) for n in ordered]).tolist())
    n_capabilities = ordered_syncs[0].plus.shape[1] if ordered_syncs else 0

    def _diag(label):
        blocks = [getattr(n, label) for n in ordered]
        if not blocks:
            return sparse.csr_matrix((0, 0))
        return sparse.block_diag(blocks, format="csr")

    def _stack(label):
        blocks = [getattr(s, label) for s in ordered_syncs]
        if not blocks:
            return sparse.csr_matrix((0, n_capabilities))
        return sparse.vstack(blocks, format="csr")

    return ServiceBlock(
        operands=operand_ids,
        place_labels=tuple((n.operand, p) for n in ordered for p in n.places),
        transition_labels=tuple((n.operand, t) for n in ordered for t in n.transitions),
        place_offsets=place_offsets,
        transition_offsets=transition_offsets,
        m_plus=_diag("m_plus"),
        m_minus=_diag("m_minus"),
        sync_plus=_stack("plus"),
        sync_minus=_stack("minus"),
        q0=np.concatenate([n.q0 for n in ordered]) if ordered else np.zeros(0),
    )


def sync_residual(u_l_plus, u_l_minus, u_plus, u_minus, block: ServiceBlock):
    """(U_L⁺ − Λ̂⁺U⁺, U_L⁻ − Λ̂⁻U⁻); both zero when the nets are synchronized."""
    r_plus = np.asarray(u_l_plus, dtype=float) - block.sync_plus @ np.asarray(u_plus, dtype=float)
    r_minus = np.asarray(u_l_minus, dtype=float) - block.sync_minus @ np.asarray(u_minus, dtype=float)
    return r_plus, r_minus
