"""Constant-size action space over placement shapes, plus the Action record.

For a fixed cluster shape the index set per candidate never changes: one
index per (2^i-node subset) in ascending node count then lexicographic
order, plus a final skip index. A candidate's demand determines the GPU
count j = demand / 2^i for each width, and indices whose subset lacks j
free GPUs on some node are masked. Skip is never masked.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterConfig, Placement


class ActionSpace:
    """Index <-> (node subset) mapping shared by every candidate head."""

    def __init__(self, config: ClusterConfig):
        self.config = config
        self.subsets: list[tuple[int, tuple[int, ...]]] = []
        for i in config.node_exponents():
            for combo in itertools.combinations(range(config.num_nodes), 2 ** i):
                self.subsets.append((i, combo))
        self.skip_index = len(self.subsets)
        self.size = len(self.subsets) + 1

    def placement_for(self, index: int, demand: int) -> Placement:
        i, combo = self.subsets[index]
        return Placement(nodes=combo, gpus_per_node_used=demand // (2 ** i))

    def mask_for(self, demand: int | None, free_per_node: np.ndarray) -> np.ndarray:
        """Feasibility mask over indices; only skip is unmasked for demand None."""
        mask = np.zeros(self.size, dtype=bool)
        mask[self.skip_index] = True
        if demand is None:
            return mask
        for idx, (i, combo) in enumerate(self.subsets):
            width = 2 ** i
            if demand % width != 0:
                continue
            j = demand // width
            if j < 1 or j > self.config.gpus_per_node:
                continue
            if all(free_per_node[n] >= j for n in combo):
                mask[idx] = True
        return mask


@dataclass
class RLDecision:
    """What the policy network produced for one round, kept for training."""

    state: np.ndarray  # flattened observation
    head_actions: np.ndarray  # (K,) int indices into the action space
    masks: np.ndarray  # (K, A) bool
    forced: bool = False  # True when the livelock guard overrode the policy


@dataclass
class Action:
    """One round's scheduling decision, as the engine applies it.

    placements are applied in order after preemptions; feasibility is
    guaranteed by construction (policies re-check after each placement).
    The empty action (no placements, no preemptions) is the explicit
    decision to schedule nothing this round.
    """

    placements: list[tuple[int, Placement]] = field(default_factory=list)
    preemptions: list[int] = field(default_factory=list)
    rl: RLDecision | None = None

    @property
    def is_noop(self) -> bool:
        return not self.placements and not self.preemptions
