"""
Timed place-transition nets and arc-constant colored Petri nets.

Markings and firings are continuous (non-negative reals). A transition that
starts at step k with duration k_d finishes at step k + k_d; while running
its tokens sit in the transition marking Q_E.
"""

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional

import numpy as np
import pandas as pd
from scipy import sparse

from hfgt.errors import DimensionError, NegativeMarkingError
from hfgt.incidence import IncidenceTensor3, matricize

TOLERANCE = 1e-9


class Bag(Mapping):
    """
    Multiset over colors with non-negative real coefficients.

    Zero coefficients are dropped, so two bags are equal when their supports
    and coefficients agree.
    """

    __slots__ = ("_items",)

    def __init__(self, items=None, **kwargs):
        merged = dict(items or {})
        merged.update(kwargs)
        clean = {}
        for color, n in merged.items():
            n = float(n)
            if n < -TOLERANCE:
                raise NegativeMarkingError("bag", 0, n, name=str(color))
            if n > TOLERANCE:
                clean[color] = n
        self._items = clean

    def __getitem__(self, color):
        return self._items.get(color, 0.0)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __contains__(self, color):
        return color in self._items

    def __add__(self, other):
        merged = dict(self._items)
        for color, n in other.items():
            merged[color] = merged.get(color, 0.0) + n
        return Bag(merged)

    def __sub__(self, other):
        merged = dict(self._items)
        for color, n in other.items():
            merged[color] = merged.get(color, 0.0) - n
        return Bag(merged)

    def __mul__(self, scalar):
        if scalar < 0:
            raise ValueError("bags scale by non-negative numbers only")
        return Bag({c: n * scalar for c, n in self._items.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Mapping):
            return NotImplemented
        colors = set(self._items) | set(other)
        return all(abs(self[c] - other.get(c, 0.0)) <= TOLERANCE for c in colors)

    def __hash__(self):
        return hash(frozenset(self._items.items()))

    def __le__(self, other):
        return all(n <= other.get(c, 0.0) + TOLERANCE for c, n in self._items.items())

    def __repr__(self):
        inner = ", ".join(f"{n:g}'{c}" for c, n in self._items.items())
        return f"Bag({inner})"

    @property
    def support(self):
        return frozenset(self._items)


class Marking(NamedTuple):
    q_b: np.ndarray
    q_e: np.ndarray


@dataclass(frozen=True)
class PlaceTransitionNet:
    places: tuple
    transitions: tuple
    m_plus: sparse.csr_matrix
    m_minus: sparse.csr_matrix
    durations: np.ndarray
    q_b0: np.ndarray = None
    q_e0: np.ndarray = None

    def __post_init__(self):
        shape = (len(self.places), len(self.transitions))
        if self.m_plus.shape != shape or self.m_minus.shape != shape:
            raise DimensionError(
                f"incidence matrices must be {shape[0]}x{shape[1]}, got "
                f"{self.m_plus.shape} and {self.m_minus.shape}"
            )
        durations = np.asarray(self.durations, dtype=np.int64).reshape(-1)
        if len(durations) != shape[1]:
            raise DimensionError("one duration per transition is required")
        object.__setattr__(self, "durations", durations)
        q_b0 = np.zeros(shape[0]) if self.q_b0 is None else np.asarray(self.q_b0, dtype=float)
        q_e0 = np.zeros(shape[1]) if self.q_e0 is None else np.asarray(self.q_e0, dtype=float)
        if q_b0.shape != (shape[0],) or q_e0.shape != (shape[1],):
            raise DimensionError("initial marking does not match the net")
        if (q_b0 < -TOLERANCE).any() or (q_e0 < -TOLERANCE).any():
            raise DimensionError("initial marking must be non-negative")
        object.__setattr__(self, "q_b0", q_b0)
        object.__setattr__(self, "q_e0", q_e0)

    @property
    def initial_marking(self):
        return Marking(self.q_b0.copy(), self.q_e0.copy())


@dataclass(frozen=True)
class ACColoredPetriNet:
    """
    Engineering system net: places are buffers, transitions are capabilities,
    colors are operands. Arc weights are the refined incidence tensors.
    """

    places: tuple
    transitions: tuple
    colors: tuple
    plus: IncidenceTensor3
    minus: IncidenceTensor3
    durations: np.ndarray
    marking: tuple = None
    transition_marking: np.ndarray = None

    def __post_init__(self):
        shape = (len(self.colors), len(self.places), len(self.transitions))
        if self.plus.shape != shape or self.minus.shape != shape:
            raise DimensionError(f"colored incidence must have shape {shape}")
        if self.marking is None:
            object.__setattr__(self, "marking", tuple(Bag() for _ in self.places))
        elif len(self.marking) != len(self.places):
            raise DimensionError("one bag per place is required")
        if self.transition_marking is None:
            object.__setattr__(self, "transition_marking", np.zeros(len(self.transitions)))
        object.__setattr__(self, "durations", np.asarray(self.durations, dtype=np.int64))

    def arc_bag(self, tensor, y, psi):
        hits = (tensor.coords[:, 1] == y) & (tensor.coords[:, 2] == psi)
        return Bag({self.colors[i]: w for i, w in zip(tensor.coords[hits, 0], tensor.values[hits])})

    def step(self, marking, transition_marking, u_minus, u_plus):
        """
        Colored state transition over bags.

        Returns:
            (tuple of Bag per place, transition marking)
        """
        u_minus = np.asarray(u_minus, dtype=float)
        u_plus = np.asarray(u_plus, dtype=float)
        injected = [Bag() for _ in self.places]
        pulled = [Bag() for _ in self.places]
        for (i, y, psi), w in self.plus.items():
            injected[y] = injected[y] + Bag({self.colors[i]: w * u_plus[psi]})
        for (i, y, psi), w in self.minus.items():
            pulled[y] = pulled[y] + Bag({self.colors[i]: w * u_minus[psi]})
        bags = []
        for y, place in enumerate(self.places):
            try:
                bags.append(marking[y] + injected[y] - pulled[y])
            except NegativeMarkingError as e:
                raise NegativeMarkingError("place", y, e.value, name=f"{e.name}@{place}")
        return tuple(bags), np.asarray(transition_marking, dtype=float) - u_plus + u_minus


@dataclass(frozen=True)
class FiringSchedule:
    """U⁻ and U⁺ as (steps × transitions) arrays; row 0 is step k = 1."""

    u_minus: np.ndarray
    u_plus: np.ndarray

    def __post_init__(self):
        u_minus = np.atleast_2d(np.asarray(self.u_minus, dtype=float))
        u_plus = np.atleast_2d(np.asarray(self.u_plus, dtype=float))
        if u_minus.shape != u_plus.shape:
            raise DimensionError("U- and U+ must have the same shape")
        if (u_minus < -TOLERANCE).any() or (u_plus < -TOLERANCE).any():
            raise ValueError("firing vectors must be non-negative")
        object.__setattr__(self, "u_minus", u_minus)
        object.__setattr__(self, "u_plus", u_plus)

    @property
    def steps(self):
        return self.u_minus.shape[0]

    @classmethod
    def zeros(cls, steps, n_transitions):
        return cls(np.zeros((steps, n_transitions)), np.zeros((steps, n_transitions)))


@dataclass(frozen=True)
class DurationViolation:
    transition: int
    step: int
    started: float
    finished: float

    @property
    def gap(self):
        return abs(self.finished - self.started)


@dataclass
class Trajectory:
    """Q_B and Q_E for steps 1..K+1 (row 0 is step 1)."""

    q_b: np.ndarray
    q_e: np.ndarray
    violation: Optional[NegativeMarkingError] = None
    violations: list = field(default_factory=list)

    @property
    def steps(self):
        return self.q_b.shape[0]


def _first_negative(vector, tol):
    below = np.flatnonzero(vector < -tol)
    if len(below):
        j = int(below[np.argmin(vector[below])])
        return j, float(vector[j])
    return None


def step_ptn(q, u_minus, u_plus, m_plus, m_minus, tol=TOLERANCE, check=True):
    """
    One state transition of a place-transition net.

        Q_B' = Q_B + M⁺U⁺ − M⁻U⁻
        Q_E' = Q_E − U⁺ + U⁻

    Args:
        q: Marking (q_b, q_e)
        u_minus, u_plus: firing vectors of length σ(E)
        m_plus, m_minus: σ(S) × σ(E) incidence matrices
        tol: negativity tolerance
        check: raise NegativeMarkingError on a negative component

    Returns:
        Marking
    """
    q_b = np.asarray(q[0], dtype=float)
    q_e = np.asarray(q[1], dtype=float)
    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    if m_plus.shape != m_minus.shape or m_plus.shape != (len(q_b), len(q_e)):
        raise DimensionError("marking and incidence matrices disagree")
    if u_minus.shape != q_e.shape or u_plus.shape != q_e.shape:
        raise DimensionError("firing vectors must have one entry per transition")
    if (u_minus < -tol).any() or (u_plus < -tol).any():
        raise ValueError("firing vectors must be non-negative")

    q_b_next = q_b + m_plus @ u_plus - m_minus @ u_minus
    q_e_next = q_e - u_plus + u_minus
    if check:
        for kind, vector in (("place", q_b_next), ("transition", q_e_next)):
            hit = _first_negative(vector, tol)
            if hit is not None:
                raise NegativeMarkingError(kind, hit[0], hit[1])
    return Marking(q_b_next, q_e_next)


def check_duration(schedule: FiringSchedule, durations, tol=TOLERANCE):
    """
    Compare every start with its finish k_d steps later.

    Only pairs with k + k_d inside the schedule are checked.

    Returns:
        list of DurationViolation (empty when every coupling holds)
    """
    durations = np.asarray(durations, dtype=np.int64)
    steps = schedule.steps
    violations = []
    for psi, k_d in enumerate(durations):
        for k in range(steps - k_d):
            started = schedule.u_minus[k, psi]
            finished = schedule.u_plus[k + k_d, psi]
            if abs(finished - started) > tol:
                violations.append(DurationViolation(psi, k + 1, float(started), float(finished)))
    return violations


def accpn_to_ptn(net: ACColoredPetriNet):
    """
    Split every place per color.

    Place (color i, buffer y) lands on row i·σ(places) + y, the same row
    order as the flattened incidence. Transitions and durations are kept.
    """
    m_plus = matricize(net.plus).matrix
    m_minus = matricize(net.minus).matrix
    places = tuple(f"{color}@{place}" for color in net.colors for place in net.places)
    q_b0 = np.array([bag[color] for color in net.colors for bag in net.marking])
    return PlaceTransitionNet(
        places=places,
        transitions=tuple(net.transitions),
        m_plus=m_plus,
        m_minus=m_minus,
        durations=net.durations.copy(),
        q_b0=q_b0,
        q_e0=np.asarray(net.transition_marking, dtype=float).copy(),
    )


def simulate(net: PlaceTransitionNet, schedule: FiringSchedule, q0=None, horizon=None, tol=TOLERANCE):
    """
    Apply the schedule for K steps from Q[1] = Q0.

    The run does not stop at a negative marking; the first one is kept on
    the trajectory and every one is listed.
    """
    horizon = schedule.steps - 1 if horizon is None else horizon
    if schedule.steps < horizon:
        raise DimensionError(f"schedule covers {schedule.steps} steps, {horizon} needed")
    q = net.initial_marking if q0 is None else Marking(*q0)
    q_b = np.zeros((horizon + 1, len(net.places)))
    q_e = np.zeros((horizon + 1, len(net.transitions)))
    q_b[0], q_e[0] = q.q_b, q.q_e
    trajectory = Trajectory(q_b, q_e)

    for k in range(horizon):
        q = step_ptn(q, schedule.u_minus[k], schedule.u_plus[k], net.m_plus, net.m_minus, check=False)
        q_b[k + 1], q_e[k + 1] = q.q_b, q.q_e
        for kind, vector, names in (("place", q.q_b, net.places), ("transition", q.q_e, net.transitions)):
            hit = _first_negative(vector, tol)
            if hit is not None:
                error = NegativeMarkingError(kind, hit[0], hit[1], step=k + 2, name=names[hit[0]])
                trajectory.violations.append(error)
                if trajectory.violation is None:
                    trajectory.violation = error
    return trajectory


def trajectory_frame(trajectory: Trajectory, net: PlaceTransitionNet):
    """Long table (step, kind, name, value)."""
    steps = np.arange(1, trajectory.steps + 1)
    places = pd.DataFrame(trajectory.q_b, columns=list(net.places))
    places.insert(0, "step", steps)
    transitions = pd.DataFrame(trajectory.q_e, columns=list(net.transitions))
    transitions.insert(0, "step", steps)
    frames = [
        places.melt(id_vars="step", var_name="name").assign(kind="place"),
        transitions.melt(id_vars="step", var_name="name").assign(kind="transition"),
    ]
    return pd.concat(frames, ignore_index=True)[["step", "kind", "name", "value"]]


def _dot_id(label):
    return '"' + str(label).replace('"', r"\"") + '"'


def to_dot(net: PlaceTransitionNet, name="net"):
    """Graphviz text: places as circles, transitions as boxes, weighted arcs."""
    lines = [f"digraph {_dot_id(name)} {{", "  rankdir=LR;"]
    for p in net.places:
        lines.append(f"  {_dot_id(p)} [shape=circle];")
    for t in net.transitions:
        lines.append(f"  {_dot_id(t)} [shape=box];")
    for matrix, outgoing in ((net.m_minus.tocoo(), False), (net.m_plus.tocoo(), True)):
        for row, col, w in sorted(zip(matrix.row, matrix.col, matrix.data)):
            place, transition = _dot_id(net.places[row]), _dot_id(net.transitions[col])
            src, dst = (transition, place) if outgoing else (place, transition)
            label = "" if w == 1 else f' [label="{w:g}"]'
            lines.append(f"  {src} -> {dst}{label};")
    lines.append("}")
    return "\n".join(lines) + "\n"
