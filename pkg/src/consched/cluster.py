"""Physical cluster model: nodes x GPUs occupancy grid and job placements.

Nodes are dense integers 0..num_nodes-1, GPU slots 0..gpus_per_node-1.
A placement always spans 2^i nodes with the same GPU count j on each,
so a job's total demand factors as j * 2^i. Slots are filled
lowest-index-first, which keeps episodes replayable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllocationConflictError,
    ConfigError,
    InvalidDemandError,
    InvalidPlacementError,
    NotFoundError,
)

EMPTY = -1


@dataclass(frozen=True)
class ClusterConfig:
    """Cluster shape and link capacities (bandwidths in MB/s).

    Defaults follow a 10 Gb/s Ethernet fabric (1250 MB/s per node link)
    and a 16 GB/s PCIe Gen3 host bus per node.
    """

    num_nodes: int = 4
    gpus_per_node: int = 8
    inter_node_bandwidth: float = 1250.0
    intra_node_bandwidth: float = 16000.0

    def __post_init__(self):
        if self.num_nodes < 1 or self.gpus_per_node < 1:
            raise ConfigError("cluster needs at least 1 node and 1 GPU per node")
        if self.inter_node_bandwidth <= 0 or self.intra_node_bandwidth <= 0:
            raise ConfigError("bandwidths must be positive")

    @property
    def total_gpus(self) -> int:
        return self.num_nodes * self.gpus_per_node

    def node_exponents(self):
        """Exponents i with 2^i <= num_nodes (feasible placement widths)."""
        exps = []
        i = 0
        while 2 ** i <= self.num_nodes:
            exps.append(i)
            i += 1
        return exps


@dataclass(frozen=True)
class Placement:
    """2^i nodes with the same number of GPUs used on each."""

    nodes: tuple[int, ...]
    gpus_per_node_used: int

    def __post_init__(self):
        n = len(self.nodes)
        if n < 1 or (n & (n - 1)) != 0:
            raise InvalidPlacementError(f"node count {n} is not a power of two")
        if len(set(self.nodes)) != n:
            raise InvalidPlacementError(f"duplicate nodes in {self.nodes}")
        if self.gpus_per_node_used < 1:
            raise InvalidPlacementError("gpus_per_node_used must be >= 1")
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @property
    def total_gpus(self) -> int:
        return len(self.nodes) * self.gpus_per_node_used


class ClusterState:
    """Occupancy grid plus the placements map, kept mutually consistent.

    Single-writer: one episode owns and mutates its ClusterState; copies
    are cheap and used by policies for what-if feasibility checks.
    """

    def __init__(self, config: ClusterConfig):
        self.config = config
        self.occupancy = np.full((config.num_nodes, config.gpus_per_node), EMPTY, dtype=np.int64)
        self.placements: dict[int, Placement] = {}

    def copy(self) -> "ClusterState":
        dup = ClusterState.__new__(ClusterState)
        dup.config = self.config
        dup.occupancy = self.occupancy.copy()
        dup.placements = dict(self.placements)
        return dup

    def free_gpus(self, node: int) -> int:
        return int(np.count_nonzero(self.occupancy[node] == EMPTY))

    def free_gpus_per_node(self) -> np.ndarray:
        return np.count_nonzero(self.occupancy == EMPTY, axis=1)

    def used_gpus(self) -> int:
        return int(np.count_nonzero(self.occupancy != EMPTY))

    def utilization(self) -> float:
        """Ratio of used GPUs to total GPUs."""
        return self.used_gpus() / self.config.total_gpus

    def is_empty(self) -> bool:
        return not self.placements

    def allocate(self, job_id: int, placement: Placement) -> "ClusterState":
        """Occupy the placement's slots for job_id. State unchanged on error."""
        if job_id in self.placements:
            raise AllocationConflictError(f"job {job_id} is already placed")
        j = placement.gpus_per_node_used
        if j > self.config.gpus_per_node:
            raise InvalidPlacementError(
                f"{j} GPUs per node exceeds node size {self.config.gpus_per_node}")
        for node in placement.nodes:
            if node < 0 or node >= self.config.num_nodes:
                raise InvalidPlacementError(f"unknown node {node}")
        for node in placement.nodes:
            if self.free_gpus(node) < j:
                raise AllocationConflictError(
                    f"node {node} has {self.free_gpus(node)} free GPUs, needs {j}")
        for node in placement.nodes:
            free_slots = np.flatnonzero(self.occupancy[node] == EMPTY)[:j]
            self.occupancy[node, free_slots] = job_id
        self.placements[job_id] = placement
        return self

    def free(self, job_id: int) -> "ClusterState":
        """Vacate all slots of a placed job."""
        if job_id not in self.placements:
            raise NotFoundError(f"job {job_id} is not placed")
        self.occupancy[self.occupancy == job_id] = EMPTY
        del self.placements[job_id]
        return self

    def colocated_jobs(self, job_id: int) -> set[int]:
        """Other jobs sharing at least one node with job_id."""
        if job_id not in self.placements:
            raise NotFoundError(f"job {job_id} is not placed")
        mine = set(self.placements[job_id].nodes)
        out = set()
        for other, placement in self.placements.items():
            if other != job_id and mine.intersection(placement.nodes):
                out.add(other)
        return out

    def jobs_on_node(self, node: int) -> set[int]:
        ids = set(int(x) for x in np.unique(self.occupancy[node]))
        ids.discard(EMPTY)
        return ids

    def audit(self) -> None:
        """Reconstruct the grid from placements and compare; raises on drift."""
        rebuilt = np.full_like(self.occupancy, EMPTY)
        for job_id, placement in self.placements.items():
            for node in placement.nodes:
                slots = np.flatnonzero(self.occupancy[node] == job_id)
                if len(slots) != placement.gpus_per_node_used:
                    raise AllocationConflictError(
                        f"job {job_id} holds {len(slots)} slots on node {node}, "
                        f"placement says {placement.gpus_per_node_used}")
                rebuilt[node, slots] = job_id
        if not np.array_equal(rebuilt, self.occupancy):
            raise AllocationConflictError("occupancy grid disagrees with placements map")


def demand_shapes(config: ClusterConfig, demand: int) -> list[tuple[int, int]]:
    """All (i, j) with j * 2^i == demand feasible on the cluster shape."""
    shapes = []
    for i in config.node_exponents():
        width = 2 ** i
        if demand % width == 0:
            j = demand // width
            if 1 <= j <= config.gpus_per_node:
                shapes.append((i, j))
    return shapes


def enumerate_placements(cluster: ClusterState, demand: int) -> list[Placement]:
    """Every feasible placement for the demand, in deterministic order.

    Order: ascending node count, then lexicographic node id tuples.
    Empty list when nothing fits; InvalidDemandError when the demand could
    never fit an empty cluster.
    """
    config = cluster.config
    if demand <= 0 or demand > config.total_gpus:
        raise InvalidDemandError(
            f"demand {demand} outside [1, {config.total_gpus}]")
    free = cluster.free_gpus_per_node()
    out = []
    for i, j in demand_shapes(config, demand):
        capable = [n for n in range(config.num_nodes) if free[n] >= j]
        for combo in itertools.combinations(capable, 2 ** i):
            out.append(Placement(nodes=combo, gpus_per_node_used=j))
    return out


def first_fit(cluster: ClusterState, demand: int) -> Placement | None:
    """First placement in enumerate_placements order, or None."""
    placements = enumerate_placements(cluster, demand)
    return placements[0] if placements else None
