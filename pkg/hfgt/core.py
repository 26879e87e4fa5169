"""
Structural vocabulary of a hetero-functional graph model.

Operands flow through the system, resources host processes, and the binary
system concept matrix says which process each resource can execute. Every
nonzero of that matrix is a capability: a transition of the engineering
system net and a column of every incidence structure built later.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import sparse

from hfgt.errors import DimensionError


class ResourceKind(str, Enum):
    TRANSFORMATION = "transformation"
    INDEPENDENT_BUFFER = "independent-buffer"
    TRANSPORTATION = "transportation"


class ProcessKind(str, Enum):
    TRANSFORMATION = "transformation"
    REFINED_TRANSPORTATION = "refined-transportation"


@dataclass(frozen=True)
class Operand:
    id: str
    name: str
    unit: str


@dataclass(frozen=True)
class Resource:
    id: str
    name: str
    kind: ResourceKind
    node: Optional[str] = None

    @property
    def is_buffer(self):
        return self.kind is not ResourceKind.TRANSPORTATION


@dataclass(frozen=True)
class Process:
    """
    A system process.

    Refined-transportation processes carry the operand they hold and the
    origin/destination buffers; origin == destination is a storage process.
    """

    id: str
    name: str
    kind: ProcessKind
    operand: Optional[str] = None
    origin: Optional[str] = None
    destination: Optional[str] = None

    @property
    def is_storage(self):
        return (
            self.kind is ProcessKind.REFINED_TRANSPORTATION
            and self.origin == self.destination
        )


def transport_process_id(operand_id, origin_id, destination_id):
    return f"transport-{operand_id}-{origin_id}-{destination_id}"


@dataclass(frozen=True)
class SystemConcept:
    """Binary process-by-resource matrix A_S with its row and column sets."""

    processes: tuple
    resources: tuple
    matrix: sparse.csc_matrix

    def __post_init__(self):
        expected = (len(self.processes), len(self.resources))
        if self.matrix.shape != expected:
            raise DimensionError(
                f"system concept is {self.matrix.shape[0]}x{self.matrix.shape[1]} "
                f"but {expected[0]} processes and {expected[1]} resources are declared"
            )
        values = self.matrix.tocsc()
        values.eliminate_zeros()
        if values.nnz and not np.all(values.data == 1):
            raise DimensionError("system concept entries must be 0 or 1")

    @classmethod
    def from_pairs(cls, processes, resources, pairs):
        """
        Build A_S from (process id, resource id) pairs.

        Args:
            processes: ordered Process sequence (rows)
            resources: ordered Resource sequence (columns)
            pairs: iterable of (process_id, resource_id)

        Returns:
            SystemConcept
        """
        row_of = {p.id: w for w, p in enumerate(processes)}
        col_of = {r.id: v for v, r in enumerate(resources)}
        rows, cols, seen = [], [], set()
        for process_id, resource_id in pairs:
            if process_id not in row_of:
                raise DimensionError(f"undeclared process '{process_id}'")
            if resource_id not in col_of:
                raise DimensionError(f"undeclared resource '{resource_id}'")
            if (process_id, resource_id) in seen:
                raise DimensionError(
                    f"capability '{process_id}@{resource_id}' declared twice"
                )
            seen.add((process_id, resource_id))
            rows.append(row_of[process_id])
            cols.append(col_of[resource_id])
        matrix = sparse.csc_matrix(
            (np.ones(len(rows)), (rows, cols)),
            shape=(len(processes), len(resources)),
        )
        return cls(tuple(processes), tuple(resources), matrix)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self):
        m = self.matrix.tocsc()
        m.eliminate_zeros()
        return m.nnz


@dataclass(frozen=True)
class Capability:
    """A (process, resource) pair allowed by A_S, with its operating data."""

    index: int
    process: Process
    resource: Resource
    duration: int = 0
    capacity: float = math.inf
    linear_cost: float = 0.0
    quadratic_cost: float = 0.0

    def __post_init__(self):
        if int(self.duration) != self.duration or self.duration < 0:
            raise ValueError(f"{self.id}: duration must be a non-negative integer")
        if self.capacity < 0:
            raise ValueError(f"{self.id}: capacity must be non-negative")
        if self.quadratic_cost < 0:
            raise ValueError(f"{self.id}: quadratic cost must be non-negative")

    @property
    def id(self):
        return f"{self.process.id}@{self.resource.id}"


@dataclass(frozen=True)
class ProcessCapabilityMap:
    """Total map ψ -> w from capability index to process row of A_S."""

    process_index: np.ndarray
    n_processes: int

    def __call__(self, psi):
        return int(self.process_index[psi])

    def __len__(self):
        return len(self.process_index)

    def as_matrix(self):
        """σ(E_S) × σ(P) selector with a single 1 per row."""
        n = len(self.process_index)
        return sparse.csr_matrix(
            (np.ones(n), (np.arange(n), self.process_index)),
            shape=(n, self.n_processes),
        )


def enumerate_capabilities(concept: SystemConcept, attributes: Optional[Mapping] = None):
    """
    List the capabilities of A_S in column-major order (resource-major,
    process-minor).

    Args:
        concept: the system concept
        attributes: optional map (process_id, resource_id) -> dict of
            duration / capacity / linear_cost / quadratic_cost

    Returns:
        list of Capability; its length is DOF_S
    """
    attributes = attributes or {}
    matrix = sparse.csc_matrix(concept.matrix)
    matrix.eliminate_zeros()
    matrix.sort_indices()

    capabilities = []
    for v, resource in enumerate(concept.resources):
        for w in matrix.indices[matrix.indptr[v]:matrix.indptr[v + 1]]:
            process = concept.processes[w]
            extra = attributes.get((process.id, resource.id), {})
            capabilities.append(
                Capability(index=len(capabilities), process=process, resource=resource, **extra)
            )
    return capabilities


def classify_buffers(resources: Sequence[Resource]):
    """B_S: transformation resources then independent buffers, declaration order kept."""
    transformation = [r for r in resources if r.kind is ResourceKind.TRANSFORMATION]
    independent = [r for r in resources if r.kind is ResourceKind.INDEPENDENT_BUFFER]
    return transformation + independent


def refined_transport_processes(operand_ids, buffers):
    """Every (operand, origin, destination) holding process over B_S × B_S."""
    processes = []
    for operand_id in operand_ids:
        for origin in buffers:
            for destination in buffers:
                if origin.id == destination.id:
                    name = f"Store {operand_id} at {origin.id}"
                else:
                    name = f"Transport {operand_id} from {origin.id} to {destination.id}"
                processes.append(Process(
                    id=transport_process_id(operand_id, origin.id, destination.id),
                    name=name,
                    kind=ProcessKind.REFINED_TRANSPORTATION,
                    operand=operand_id,
                    origin=origin.id,
                    destination=destination.id,
                ))
    return processes


def process_capability_map(capabilities, processes):
    row_of = {p.id: w for w, p in enumerate(processes)}
    index = np.array([row_of[c.process.id] for c in capabilities], dtype=np.int64)
    return ProcessCapabilityMap(index, len(processes))
