import numpy as np
import pytest
from scipy import sparse

from hfgt.errors import DeviceModelError, DimensionError
from hfgt.service import (
    ServiceFeasibilityMatrix,
    ServiceNet,
    SynchronizationMatrix,
    build_feasibility,
    build_sync_matrices,
    concat_services,
    sync_residual,
)


def _net(operand, places=1, transitions=1):
    return ServiceNet(
        operand=operand,
        places=tuple(f"{operand}_p{n}" for n in range(places)),
        transitions=tuple(f"{operand}_t{n}" for n in range(transitions)),
        m_plus=sparse.csr_matrix((places, transitions)),
        m_minus=sparse.csr_matrix((places, transitions)),
    )


def test_service_net_entries_are_binary():
    with pytest.raises(DimensionError, match="0 or 1"):
        ServiceNet("A", ("p",), ("t",), sparse.csr_matrix(np.array([[2.0]])), sparse.csr_matrix((1, 1)))
    with pytest.raises(DimensionError, match="expected"):
        ServiceNet("A", ("p",), ("t",), sparse.csr_matrix((2, 1)), sparse.csr_matrix((1, 1)))


def test_capability_realizes_at_most_one_transition():
    with pytest.raises(DimensionError, match="more than one"):
        ServiceFeasibilityMatrix("A", sparse.csr_matrix(np.ones((2, 1))), sparse.csr_matrix((2, 1)))


def test_toy_feasibility_and_sync(toy_system):
    (lam,) = toy_system.feasibility
    # W_cycle starts with serve@tank (psi 1) and finishes with pump@well (psi 0)
    np.testing.assert_array_equal(lam.minus.toarray(), [[0, 1]])
    np.testing.assert_array_equal(lam.plus.toarray(), [[1, 0]])
    block = toy_system.service
    assert block.n_places == 1 and block.n_transitions == 1
    np.testing.assert_array_equal(block.sync_plus.toarray(), [[1.0, 0.0]])
    np.testing.assert_array_equal(block.sync_minus.toarray(), [[0.0, 1.0]])


def test_sync_needs_a_device_ratio(toy_system):
    net = toy_system.service_nets[0]
    # serve never ejects water, so it cannot finish a service transition
    lam = build_feasibility(net, toy_system.capabilities, {"W_cycle": {"finish": ["serve"]}})
    with pytest.raises(DeviceModelError, match="D\\+"):
        build_sync_matrices(lam, toy_system.device, toy_system.pmap, 0)


def test_transport_token_expands_to_operand_transports(fixture_system):
    h2 = [o.id for o in fixture_system.operands].index("H2")
    lam = fixture_system.feasibility[h2]
    move = fixture_system.service_nets[h2].transitions.index("H2_move")
    realized = set(lam.minus[move].indices)
    expected = {
        c.index for c in fixture_system.capabilities
        if c.process.operand == "H2"
    }
    assert realized == expected
    # 6 stores and 9 pipelines
    assert len(expected) == 15
    assert set(lam.plus[move].indices) == expected


def test_sync_scales_by_device_ratio(fixture_system):
    operand_ids = [o.id for o in fixture_system.operands]
    o2 = operand_ids.index("O2")
    sync = fixture_system.syncs[o2]
    net = fixture_system.service_nets[o2]
    x = net.transitions.index("O2_by_electrolysis")
    psi = fixture_system.capability_index["electrolyze@N1"]
    assert sync.plus[x, psi] == pytest.approx(7.936)


def test_fixture_service_block(fixture_system):
    block = fixture_system.service
    assert block.operands == tuple(o.id for o in fixture_system.operands)
    assert block.n_places == 8
    assert block.n_transitions == 44
    assert block.sync_plus.shape == (44, 61)
    assert list(block.operand_places("CO2")) == [block.place_offsets[4]]


def test_concat_requires_every_operand():
    nets = [_net("A"), _net("B", places=2, transitions=3)]
    syncs = [
        SynchronizationMatrix("A", sparse.csr_matrix((1, 4)), sparse.csr_matrix((1, 4))),
        SynchronizationMatrix("B", sparse.csr_matrix((3, 4)), sparse.csr_matrix((3, 4))),
    ]
    block = concat_services(nets, syncs, ["B", "A"])
    assert block.place_offsets == (0, 2, 3)
    assert block.transition_offsets == (0, 3, 4)
    assert block.m_plus.shape == (3, 4)
    assert block.place_labels[0] == ("B", "B_p0")

    with pytest.raises(DimensionError, match="no service net"):
        concat_services(nets, syncs, ["A", "B", "C"])
    with pytest.raises(DimensionError, match="undeclared"):
        concat_services(nets, syncs, ["A"])


def test_sync_residual_is_zero_when_synchronized(toy_system):
    block = toy_system.service
    u_plus = np.array([3.0, 0.0])
    u_minus = np.array([0.0, 4.0])
    r_plus, r_minus = sync_residual(np.array([3.0]), np.array([4.0]), u_plus, u_minus, block)
    np.testing.assert_allclose(r_plus, 0.0)
    np.testing.assert_allclose(r_minus, 0.0)
    r_plus, _ = sync_residual(np.array([2.0]), np.array([4.0]), u_plus, u_minus, block)
    np.testing.assert_allclose(r_plus, [-1.0])
