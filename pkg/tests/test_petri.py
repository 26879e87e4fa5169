import numpy as np
import pytest
from scipy import sparse

from hfgt.errors import DimensionError, NegativeMarkingError
from hfgt.incidence import IncidenceTensor3
from hfgt.petri import (
    ACColoredPetriNet,
    Bag,
    FiringSchedule,
    Marking,
    PlaceTransitionNet,
    accpn_to_ptn,
    check_duration,
    simulate,
    step_ptn,
    to_dot,
    trajectory_frame,
)


def _random_net(rng, places, transitions, density=0.4):
    m_plus = sparse.random(places, transitions, density=density, random_state=rng, format="csr")
    m_minus = sparse.random(places, transitions, density=density, random_state=rng, format="csr")
    return m_plus, m_minus


def test_step_is_affine_and_conserves_tokens_in_flight():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n_places, n_transitions = rng.integers(1, 8), rng.integers(1, 8)
        m_plus, m_minus = _random_net(rng, n_places, n_transitions)
        q = Marking(rng.uniform(0, 10, n_places), rng.uniform(0, 10, n_transitions))
        u1_minus, u1_plus = rng.uniform(0, 1, n_transitions), rng.uniform(0, 1, n_transitions)
        u2_minus, u2_plus = rng.uniform(0, 1, n_transitions), rng.uniform(0, 1, n_transitions)

        zero = np.zeros(n_transitions)
        base = step_ptn(q, zero, zero, m_plus, m_minus, check=False)
        np.testing.assert_allclose(base.q_b, q.q_b)
        np.testing.assert_allclose(base.q_e, q.q_e)

        # the update is linear in the firing vectors
        one = step_ptn(q, u1_minus, u1_plus, m_plus, m_minus, check=False)
        two = step_ptn(q, u2_minus, u2_plus, m_plus, m_minus, check=False)
        both = step_ptn(q, u1_minus + u2_minus, u1_plus + u2_plus, m_plus, m_minus, check=False)
        np.testing.assert_allclose(both.q_b - q.q_b, (one.q_b - q.q_b) + (two.q_b - q.q_b), atol=1e-12)
        np.testing.assert_allclose(both.q_e - q.q_e, (one.q_e - q.q_e) + (two.q_e - q.q_e), atol=1e-12)

        # starting and finishing the same amount leaves Q_E unchanged
        same = step_ptn(q, u1_minus, u1_minus, m_plus, m_minus, check=False)
        np.testing.assert_allclose(same.q_e, q.q_e, atol=1e-12)
        np.testing.assert_allclose(
            same.q_b, q.q_b + (m_plus - m_minus) @ u1_minus, atol=1e-12
        )


def test_step_flags_negative_marking():
    m_plus = sparse.csr_matrix(np.array([[0.0], [1.0]]))
    m_minus = sparse.csr_matrix(np.array([[2.0], [0.0]]))
    q = Marking(np.array([1.0, 0.0]), np.array([0.0]))
    with pytest.raises(NegativeMarkingError) as info:
        step_ptn(q, np.array([1.0]), np.array([1.0]), m_plus, m_minus)
    assert info.value.kind == "place"
    assert info.value.index == 0
    assert info.value.value == pytest.approx(-1.0)

    with pytest.raises(NegativeMarkingError, match="transition"):
        step_ptn(q, np.array([0.0]), np.array([0.5]), m_plus, m_minus)

    with pytest.raises(ValueError):
        step_ptn(q, np.array([-1.0]), np.array([0.0]), m_plus, m_minus)
    with pytest.raises(DimensionError):
        step_ptn(q, np.array([1.0, 0.0]), np.array([1.0, 0.0]), m_plus, m_minus)


def _colored_net(marking=None):
    # colors x, y over places p0, p1; t0 turns 2x at p0 into 1y at p1, t1 holds y at p1
    shape = (2, 2, 2)
    minus = IncidenceTensor3.from_entries(shape, {(0, 0, 0): 2.0, (1, 1, 1): 1.0})
    plus = IncidenceTensor3.from_entries(shape, {(1, 1, 0): 1.0, (1, 1, 1): 1.0})
    return ACColoredPetriNet(
        places=("p0", "p1"),
        transitions=("t0", "t1"),
        colors=("x", "y"),
        plus=plus,
        minus=minus,
        durations=np.array([1, 0]),
        marking=marking,
    )


def test_colored_step_matches_color_split_net():
    rng = np.random.default_rng(11)
    net = _colored_net((Bag(x=10.0), Bag(y=3.0)))
    ptn = accpn_to_ptn(net)
    assert ptn.places == ("x@p0", "x@p1", "y@p0", "y@p1")
    np.testing.assert_allclose(ptn.q_b0, [10.0, 0.0, 0.0, 3.0])
    np.testing.assert_array_equal(ptn.durations, net.durations)

    for _ in range(200):
        u_minus = rng.uniform(0, 1, 2)
        u_plus = rng.uniform(0, 1, 2)
        bags, q_e = net.step(net.marking, net.transition_marking, u_minus, u_plus)
        flat = step_ptn(ptn.initial_marking, u_minus, u_plus, ptn.m_plus, ptn.m_minus, check=False)
        split = [bags[y][color] for color in net.colors for y in range(len(net.places))]
        np.testing.assert_allclose(split, flat.q_b, atol=1e-9)
        np.testing.assert_allclose(q_e, flat.q_e)


def test_colored_step_rejects_overdraw():
    net = _colored_net((Bag(x=1.0), Bag()))
    with pytest.raises(NegativeMarkingError) as info:
        net.step(net.marking, net.transition_marking, np.array([1.0, 0.0]), np.zeros(2))
    assert info.value.name == "x@p0"


def test_bag_arithmetic():
    a = Bag(x=1.0, y=2.0)
    b = Bag({"y": 1.0, "z": 0.0})
    assert (a + b) == {"x": 1.0, "y": 3.0}
    assert (a - b) == Bag(x=1.0, y=1.0)
    assert 2 * b == Bag(y=2.0)
    assert b <= a
    assert "z" not in b
    assert a.support == frozenset({"x", "y"})
    with pytest.raises(NegativeMarkingError):
        b - a


def test_simulate_records_every_negative_marking():
    net = PlaceTransitionNet(
        places=("p",),
        transitions=("take",),
        m_plus=sparse.csr_matrix((1, 1)),
        m_minus=sparse.csr_matrix(np.array([[1.0]])),
        durations=np.array([0]),
        q_b0=np.array([1.5]),
    )
    schedule = FiringSchedule(np.ones((3, 1)), np.ones((3, 1)))
    trajectory = simulate(net, schedule, horizon=2)
    np.testing.assert_allclose(trajectory.q_b[:, 0], [1.5, 0.5, -0.5])
    assert trajectory.steps == 3
    assert len(trajectory.violations) == 1
    assert trajectory.violation.step == 3
    assert trajectory.violation.name == "p"

    frame = trajectory_frame(trajectory, net)
    assert list(frame.columns) == ["step", "kind", "name", "value"]
    assert len(frame) == 6


def test_simulate_needs_a_long_enough_schedule():
    net = PlaceTransitionNet(("p",), ("t",), sparse.csr_matrix((1, 1)), sparse.csr_matrix((1, 1)), np.array([0]))
    with pytest.raises(DimensionError):
        simulate(net, FiringSchedule.zeros(2, 1), horizon=5)


def test_duration_coupling():
    u_minus = np.array([[2.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    u_plus = np.array([[0.0, 1.0], [0.0, 0.0], [2.0, 0.0]])
    assert check_duration(FiringSchedule(u_minus, u_plus), [2, 0]) == []

    u_plus[2, 0] = 1.5
    violations = check_duration(FiringSchedule(u_minus, u_plus), [2, 0])
    assert len(violations) == 1
    assert violations[0].transition == 0
    assert violations[0].step == 1
    assert violations[0].gap == pytest.approx(0.5)


def test_firing_schedule_validation():
    with pytest.raises(ValueError):
        FiringSchedule(np.array([[-0.1]]), np.array([[0.0]]))
    with pytest.raises(DimensionError):
        FiringSchedule(np.zeros((2, 1)), np.zeros((2, 2)))


def test_net_shape_validation():
    with pytest.raises(DimensionError, match="incidence matrices"):
        PlaceTransitionNet(("p",), ("t",), sparse.csr_matrix((2, 1)), sparse.csr_matrix((1, 1)), np.array([0]))
    with pytest.raises(DimensionError, match="duration"):
        PlaceTransitionNet(("p",), ("t",), sparse.csr_matrix((1, 1)), sparse.csr_matrix((1, 1)), np.array([0, 1]))


def test_dot_export_lists_weighted_arcs():
    ptn = accpn_to_ptn(_colored_net())
    dot = to_dot(ptn, name="toy")
    assert dot.startswith('digraph "toy" {')
    assert '"x@p0" -> "t0" [label="2"];' in dot
    assert '"t0" -> "y@p1";' in dot


def test_fixture_arcs_carry_device_ratios(fixture_system):
    esn = fixture_system.esn
    n1 = esn.places.index("N1")
    psi = fixture_system.capability_index["electrolyze@N1"]
    pulled = esn.arc_bag(esn.minus, n1, psi)
    injected = esn.arc_bag(esn.plus, n1, psi)
    assert dict(pulled) == pytest.approx({"H2O": 8.936, "POWER": 40.0})
    assert dict(injected) == pytest.approx({"H2": 1.0, "O2": 7.936})
