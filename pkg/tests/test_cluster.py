import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consched.cluster import (ClusterConfig, ClusterState, Placement,
                              demand_shapes, enumerate_placements, first_fit)
from consched.errors import (AllocationConflictError, InvalidDemandError,
                             InvalidPlacementError, NotFoundError)


@pytest.fixture
def cluster():
    return ClusterState(ClusterConfig())


def shapes_of(placements):
    return {(len(p.nodes), p.gpus_per_node_used) for p in placements}


class TestPlacement:
    def test_power_of_two_node_count_enforced(self):
        with pytest.raises(InvalidPlacementError):
            Placement(nodes=(0, 1, 2), gpus_per_node_used=1)

    def test_duplicate_nodes_rejected(self):
        with pytest.raises(InvalidPlacementError):
            Placement(nodes=(0, 0), gpus_per_node_used=1)

    def test_total(self):
        assert Placement(nodes=(0, 1), gpus_per_node_used=3).total_gpus == 6


class TestEnumeratePlacements:
    def test_demand_4_has_all_three_shapes(self, cluster):
        shapes = shapes_of(enumerate_placements(cluster, 4))
        assert {(1, 4), (2, 2), (4, 1)} <= shapes

    def test_demand_8_excludes_mismatched_factorization(self, cluster):
        shapes = shapes_of(enumerate_placements(cluster, 8))
        assert (2, 2) not in shapes  # 2 nodes x 2 GPUs is 4 GPUs, not 8
        assert (2, 4) in shapes

    def test_demand_3_single_node_only(self, cluster):
        shapes = shapes_of(enumerate_placements(cluster, 3))
        assert shapes == {(1, 3)}

    def test_ordering_ascending_width_then_lexicographic(self, cluster):
        placements = enumerate_placements(cluster, 4)
        widths = [len(p.nodes) for p in placements]
        assert widths == sorted(widths)
        two_node = [p.nodes for p in placements if len(p.nodes) == 2]
        assert two_node == sorted(two_node)

    def test_invalid_demand(self, cluster):
        with pytest.raises(InvalidDemandError):
            enumerate_placements(cluster, 0)
        with pytest.raises(InvalidDemandError):
            enumerate_placements(cluster, 33)

    def test_no_feasible_returns_empty(self):
        cluster = ClusterState(ClusterConfig(num_nodes=2, gpus_per_node=2))
        cluster.allocate(0, Placement(nodes=(0, 1), gpus_per_node_used=2))
        assert enumerate_placements(cluster, 1) == []

    @given(demand=st.integers(min_value=1, max_value=32))
    @settings(max_examples=40, deadline=None)
    def test_enumerated_placements_never_conflict(self, demand):
        cluster = ClusterState(ClusterConfig())
        for placement in enumerate_placements(cluster, demand):
            trial = cluster.copy()
            trial.allocate(7, placement)  # must not raise
            trial.audit()


class TestAllocateFree:
    def test_allocate_updates_used(self, cluster):
        cluster.allocate(1, Placement(nodes=(0,), gpus_per_node_used=2))
        assert cluster.used_gpus() == 2

    def test_lowest_slots_first(self, cluster):
        cluster.allocate(1, Placement(nodes=(0,), gpus_per_node_used=2))
        assert list(cluster.occupancy[0][:2]) == [1, 1]
        assert (cluster.occupancy[0][2:] == -1).all()

    def test_conflict_leaves_state_unchanged(self, cluster):
        cluster.allocate(1, Placement(nodes=(0,), gpus_per_node_used=7))
        before = cluster.occupancy.copy()
        with pytest.raises(AllocationConflictError):
            cluster.allocate(2, Placement(nodes=(0,), gpus_per_node_used=2))
        assert np.array_equal(cluster.occupancy, before)
        assert 2 not in cluster.placements

    def test_double_allocate_same_job(self, cluster):
        cluster.allocate(1, Placement(nodes=(0,), gpus_per_node_used=1))
        with pytest.raises(AllocationConflictError):
            cluster.allocate(1, Placement(nodes=(1,), gpus_per_node_used=1))

    def test_unknown_node(self, cluster):
        with pytest.raises(InvalidPlacementError):
            cluster.allocate(1, Placement(nodes=(9,), gpus_per_node_used=1))

    def test_allocate_free_roundtrip(self, cluster):
        before = cluster.occupancy.copy()
        cluster.allocate(1, Placement(nodes=(0, 1), gpus_per_node_used=3))
        cluster.free(1)
        assert np.array_equal(cluster.occupancy, before)
        assert cluster.placements == {}

    def test_free_unknown_job(self, cluster):
        with pytest.raises(NotFoundError):
            cluster.free(42)

    def test_free_keeps_other_jobs(self, cluster):
        cluster.allocate(1, Placement(nodes=(0,), gpus_per_node_used=2))
        cluster.allocate(2, Placement(nodes=(0,), gpus_per_node_used=2))
        cluster.free(1)
        assert cluster.used_gpus() == 2
        assert 2 in cluster.placements


class TestColocation:
    def test_disjoint_jobs(self, cluster):
        cluster.allocate(1, Placement(nodes=(0,), gpus_per_node_used=1))
        cluster.allocate(2, Placement(nodes=(1,), gpus_per_node_used=1))
        assert cluster.colocated_jobs(1) == set()

    def test_shared_node(self, cluster):
        cluster.allocate(1, Placement(nodes=(0, 1), gpus_per_node_used=1))
        cluster.allocate(2, Placement(nodes=(1, 2), gpus_per_node_used=1))
        assert cluster.colocated_jobs(1) == {2}
        assert cluster.colocated_jobs(2) == {1}

    def test_three_on_one_node(self, cluster):
        for jid in (1, 2, 3):
            cluster.allocate(jid, Placement(nodes=(0,), gpus_per_node_used=2))
        assert cluster.colocated_jobs(1) == {2, 3}
        assert cluster.colocated_jobs(2) == {1, 3}

    def test_unknown_job(self, cluster):
        with pytest.raises(NotFoundError):
            cluster.colocated_jobs(5)


class TestUtilization:
    def test_empty(self, cluster):
        assert cluster.utilization() == 0.0

    def test_full(self, cluster):
        for node in range(4):
            cluster.allocate(node, Placement(nodes=(node,), gpus_per_node_used=8))
        assert cluster.utilization() == 1.0

    def test_quarter(self, cluster):
        cluster.allocate(1, Placement(nodes=(0,), gpus_per_node_used=8))
        assert cluster.utilization() == 0.25

    def test_monotone_by_exact_demand(self, cluster):
        placement = Placement(nodes=(0, 1), gpus_per_node_used=2)
        before = cluster.utilization()
        cluster.allocate(1, placement)
        assert cluster.utilization() == pytest.approx(before + 4 / 32)
        cluster.free(1)
        assert cluster.utilization() == before


@given(ops=st.lists(st.tuples(st.integers(0, 5), st.integers(1, 16)), max_size=40))
@settings(max_examples=60, deadline=None)
def test_random_alloc_free_sequences_stay_consistent(ops):
    """Reconstruction audit under arbitrary allocate/free interleavings."""
    cluster = ClusterState(ClusterConfig())
    for jid, demand in ops:
        if jid in cluster.placements:
            cluster.free(jid)
        else:
            placement = first_fit(cluster, demand)
            if placement is not None:
                cluster.allocate(jid, placement)
        cluster.audit()
        assert cluster.used_gpus() == sum(p.total_gpus for p in cluster.placements.values())


def test_demand_shapes_respects_cluster():
    small = ClusterConfig(num_nodes=2, gpus_per_node=2)
    assert demand_shapes(small, 4) == [(1, 2)]
    assert demand_shapes(small, 2) == [(0, 2), (1, 1)]
