"""Scheduling policies behind one per-round decision interface.

Baselines (greedy, LAS, SRTF) see the full waiting queue, matching their
classical definitions. Only the RL policies observe the K-candidate
window and the fixed-shape state tensor; this asymmetry is deliberate
and affects how comparisons should be read.
"""

from __future__ import annotations

import numpy as np

from .actions import Action, ActionSpace, RLDecision
from .cluster import ClusterState, first_fit
from .encoding import FeatureConfig, encode_state, select_candidates
from .errors import ConfigError
from .rl.net import PolicyNet, masked_log_softmax
from .workload import JobSpec, JobState

POLICY_KINDS = ("greedy", "las", "srtf", "srtf-np", "rl-base", "rl-hybrid")


def _greedy_scan(cluster: ClusterState, ordered: list[JobSpec]) -> list[tuple[int, "Placement"]]:
    """Place each job at its first feasible placement, in the given order."""
    sim = cluster.copy()
    placements = []
    for spec in ordered:
        placement = first_fit(sim, spec.gpu_demand)
        if placement is not None:
            sim.allocate(spec.id, placement)
            placements.append((spec.id, placement))
    return placements


def decide_fifo_greedy(cluster: ClusterState, queue: list[JobSpec]) -> Action:
    """Head-first greedy packing; also the RL-Hybrid safety rule."""
    return Action(placements=_greedy_scan(cluster, queue))


def las_order(queue: list[JobSpec], states: dict[int, JobState]) -> list[JobSpec]:
    """Ascending attained service (GPU-seconds); ties by arrival, then id."""
    return sorted(queue, key=lambda s: (states[s.id].attained_service, s.arrival_time, s.id))


def srtf_order(queue: list[JobSpec], states: dict[int, JobState]) -> list[JobSpec]:
    """Ascending contention-free remaining time; ties by arrival, then id."""
    return sorted(queue, key=lambda s: (states[s.id].remaining_time_ideal, s.arrival_time, s.id))


def decide_las(cluster: ClusterState, queue: list[JobSpec],
               states: dict[int, JobState]) -> Action:
    return Action(placements=_greedy_scan(cluster, las_order(queue, states)))


def decide_srtf(cluster: ClusterState, queue: list[JobSpec],
                states: dict[int, JobState], preemptive: bool = True) -> Action:
    """SRTF with optional classic preemption.

    When the shortest unplaced waiting job cannot fit, running jobs with
    strictly larger remaining time are preempted (largest first) until it
    fits; if even freeing all of them would not help, nothing is preempted.
    """
    ordered = srtf_order(queue, states)
    sim = cluster.copy()
    placements = []
    unplaced = []
    for spec in ordered:
        placement = first_fit(sim, spec.gpu_demand)
        if placement is not None:
            sim.allocate(spec.id, placement)
            placements.append((spec.id, placement))
        else:
            unplaced.append(spec)
    if not preemptive or not unplaced:
        return Action(placements=placements)
    target = unplaced[0]
    victims = [jid for jid in cluster.placements
               if states[jid].remaining_time_ideal > states[target.id].remaining_time_ideal]
    # free the longest-remaining victims first; youngest breaks ties
    victims.sort(key=lambda jid: (-states[jid].remaining_time_ideal,
                                  -states[jid].spec.arrival_time, -jid))
    chosen = []
    placement = None
    for jid in victims:
        sim.free(jid)
        chosen.append(jid)
        placement = first_fit(sim, target.gpu_demand)
        if placement is not None:
            break
    if placement is None:
        return Action(placements=placements)
    placements.append((target.id, placement))
    return Action(placements=placements, preemptions=chosen)


class GreedyPolicy:
    name = "greedy"

    def decide(self, cluster, queue, states, rng=None) -> Action:
        return decide_fifo_greedy(cluster, queue)


class LASPolicy:
    name = "las"

    def decide(self, cluster, queue, states, rng=None) -> Action:
        return decide_las(cluster, queue, states)


class SRTFPolicy:
    def __init__(self, preemptive: bool = True):
        self.preemptive = preemptive
        self.name = "srtf" if preemptive else "srtf-np"

    def decide(self, cluster, queue, states, rng=None) -> Action:
        return decide_srtf(cluster, queue, states, preemptive=self.preemptive)


class RLBasePolicy:
    """Acts from the trained policy alone; may decline to schedule."""

    name = "rl-base"

    def __init__(self, net: PolicyNet, action_space: ActionSpace,
                 feature_cfg: FeatureConfig | None = None,
                 deterministic: bool = True):
        self.net = net
        self.space = action_space
        self.feature_cfg = feature_cfg or FeatureConfig()
        self.deterministic = deterministic
        self.k = net.arch.k
        if net.arch.head_size != action_space.size:
            raise ConfigError(
                f"policy head size {net.arch.head_size} != action space {action_space.size}")

    def decide(self, cluster, queue, states, rng=None) -> Action:
        candidates = select_candidates(queue, self.k) if queue else []
        tensor = encode_state(cluster, candidates, states, self.feature_cfg)
        x = tensor.ravel()
        logits = self.net.head_logits(x)
        free = cluster.free_gpus_per_node().astype(np.int64)
        head_actions = np.full(self.k, self.space.skip_index, dtype=np.int64)
        masks = np.zeros((self.k, self.space.size), dtype=bool)
        placements = []
        for head in range(self.k):
            demand = candidates[head].gpu_demand if head < len(candidates) else None
            mask = self.space.mask_for(demand, free)
            masks[head] = mask
            probs, _ = masked_log_softmax(logits[head], mask)
            if self.deterministic:
                idx = int(np.argmax(probs))
            else:
                idx = int(rng.choice(self.space.size, p=probs))
            head_actions[head] = idx
            if idx != self.space.skip_index:
                placement = self.space.placement_for(idx, demand)
                placements.append((candidates[head].id, placement))
                for node in placement.nodes:
                    free[node] -= placement.gpus_per_node_used
        return Action(placements=placements,
                      rl=RLDecision(state=x, head_actions=head_actions, masks=masks))


def hybridize(base_action: Action, cluster, queue) -> Action:
    """Apply the greedy safety rule when the policy scheduled nothing."""
    if base_action.placements:
        return base_action
    greedy = decide_fifo_greedy(cluster, queue)
    if not greedy.placements:
        return base_action
    return Action(placements=greedy.placements,
                  preemptions=base_action.preemptions, rl=base_action.rl)


class RLHybridPolicy:
    """Decision-level multiplexing: the trained policy, greedy on empty actions."""

    name = "rl-hybrid"

    def __init__(self, net, action_space, feature_cfg=None, deterministic: bool = True):
        self.base = RLBasePolicy(net, action_space, feature_cfg, deterministic)
        self.k = self.base.k

    def decide(self, cluster, queue, states, rng=None) -> Action:
        return hybridize(self.base.decide(cluster, queue, states, rng), cluster, queue)


def make_policy(kind: str, net: PolicyNet | None = None,
                action_space: ActionSpace | None = None,
                feature_cfg: FeatureConfig | None = None,
                deterministic: bool = True):
    if kind == "greedy":
        return GreedyPolicy()
    if kind == "las":
        return LASPolicy()
    if kind == "srtf":
        return SRTFPolicy(preemptive=True)
    if kind == "srtf-np":
        return SRTFPolicy(preemptive=False)
    if kind in ("rl-base", "rl-hybrid"):
        if net is None or action_space is None:
            raise ConfigError(f"{kind} needs a loaded policy checkpoint")
        cls = RLBasePolicy if kind == "rl-base" else RLHybridPolicy
        return cls(net, action_space, feature_cfg, deterministic)
    raise ConfigError(f"unknown policy kind {kind!r}; valid: {', '.join(POLICY_KINDS)}")
