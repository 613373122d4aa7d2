"""Round-based episode driver.

Each round: enqueue arrivals, let the policy decide, apply preemptions
then placements, profile per-job CS and contended throughput, advance
every running job by the round interval (finishing jobs at their exact
crossing times), then preempt CS-threshold offenders one at a time with
re-evaluation. Throughput is piecewise-constant per round: a finishing
neighbor only changes co-residents' CS at the next round boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .actions import Action, RLDecision
from .cluster import ClusterConfig, ClusterState
from .contention import ContentionParams, contention_sensitivity, default_cs_table
from .errors import ConfigError, InvalidPlacementError
from .policies import decide_fifo_greedy, hybridize
from .rl.reward import DEFAULT_CS_CAP, RewardWeights, compute_reward
from .workload import JobSpec, JobState, Phase, advance

log = logging.getLogger(__name__)

_DEFAULT_TABLE = None


def default_contention_params() -> ContentionParams:
    """Table mode over the shipped calibrated table (built once)."""
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = default_cs_table()
    return ContentionParams(mode="table", table=_DEFAULT_TABLE)


@dataclass
class EpisodeConfig:
    round_interval: float = 0.25
    cs_preemption_threshold: float | None = 2.0  # None turns preemption off
    restore_penalty: float = 5.0
    checkpoint_grace: float = 5.0  # preempted job re-queues once its checkpoint is written
    contention: ContentionParams | None = None  # None -> calibrated table mode
    contention_enabled: bool = True
    cs_cap: float = DEFAULT_CS_CAP
    livelock_rounds: int = 10
    max_rounds: int = 2_000_000
    seed: int = 0

    def __post_init__(self):
        if self.round_interval <= 0:
            raise ConfigError("round_interval must be positive")
        if self.cs_preemption_threshold is not None and self.cs_preemption_threshold <= 1:
            raise ConfigError("cs_preemption_threshold must exceed 1")

    def contention_params(self) -> ContentionParams:
        return self.contention if self.contention is not None else default_contention_params()


@dataclass
class RoundRecord:
    time: float
    utilization: float
    mean_cs: float
    reward: float
    num_running: int
    num_waiting: int
    num_placed: int
    num_preempted: int


@dataclass
class JobRecord:
    id: int
    model: str
    demand: int
    arrival: float
    start: float
    finish: float
    jct: float
    preemptions: int
    mean_cs: float
    isolated_runtime: float


@dataclass
class EpisodeReport:
    jobs: list[JobRecord]
    rounds: list[RoundRecord]
    aggregates: dict
    # (decision, reward, counterfactual no-op reward) per recorded round
    trajectory: list[tuple[RLDecision, float, float]] = field(default_factory=list)
    shadow_utils: list[tuple[float, float]] = field(default_factory=list)
    audit_rows: list[list[tuple]] = field(default_factory=list)

    def jct_values(self) -> list[float]:
        return [j.jct for j in self.jobs]

    def jct_cdf(self) -> list[tuple[float, float]]:
        jcts = sorted(self.jct_values())
        n = len(jcts)
        return [(v, (k + 1) / n) for k, v in enumerate(jcts)]

    def util_histogram(self, bins: int = 20) -> list[tuple[float, float]]:
        """(bin left edge, fraction of rounds) over [0, 1]."""
        utils = [r.utilization for r in self.rounds]
        counts, edges = np.histogram(utils, bins=bins, range=(0.0, 1.0))
        total = max(1, len(utils))
        return [(float(edges[k]), counts[k] / total) for k in range(bins)]

    def cs_job_histogram(self, bins: int = 15, cap: float = 4.0) -> list[tuple[float, float]]:
        """(bin left edge, fraction of jobs) over per-job mean experienced CS."""
        values = [min(j.mean_cs, cap) for j in self.jobs]
        counts, edges = np.histogram(values, bins=bins, range=(1.0, cap))
        total = max(1, len(values))
        return [(float(edges[k]), counts[k] / total) for k in range(bins)]


def percentile_90(values: list[float]) -> float:
    """Nearest-rank 90th percentile."""
    ordered = sorted(values)
    idx = math.ceil(0.9 * len(ordered)) - 1
    return ordered[max(0, idx)]


def _aggregate(jobs: list[JobRecord], rounds: list[RoundRecord]) -> dict:
    jcts = [j.jct for j in jobs]
    running_rounds = [r.mean_cs for r in rounds if r.num_running > 0]
    return {
        "num_jobs": len(jobs),
        "num_rounds": len(rounds),
        "avg_jct": sum(jcts) / len(jcts) if jcts else 0.0,
        "p90_jct": percentile_90(jcts) if jcts else 0.0,
        "mean_util": sum(r.utilization for r in rounds) / len(rounds) if rounds else 0.0,
        "mean_cs": sum(running_rounds) / len(running_rounds) if running_rounds else 0.0,
        "mean_reward": sum(r.reward for r in rounds) / len(rounds) if rounds else 0.0,
        "total_preemptions": sum(j.preemptions for j in jobs),
        "avg_queueing": sum(j.start - j.arrival for j in jobs) / len(jobs) if jobs else 0.0,
        "makespan": max((j.finish for j in jobs), default=0.0),
    }


def _profile_cs(cluster: ClusterState, states: dict[int, JobState],
                params: ContentionParams, enabled: bool) -> dict[int, float]:
    """CS of every placed job under the current co-location."""
    placed = sorted(cluster.placements)
    if not enabled:
        return {jid: 1.0 for jid in placed}
    out = {}
    for jid in placed:
        spec = states[jid].spec
        placement = cluster.placements[jid]
        others = [(states[o].spec.profile, cluster.placements[o])
                  for o in placed if o != jid]
        out[jid] = contention_sensitivity((spec.profile, placement), others,
                                          params, cluster.config)
    return out


def _preempt(cluster: ClusterState, state: JobState, cfg: EpisodeConfig) -> None:
    cluster.free(state.spec.id)
    state.placement = None
    state.phase = Phase.PREEMPTED
    state.restore_remaining = cfg.restore_penalty
    state.preemption_count += 1


def run_episode(policy, trace: list[JobSpec], episode_config: EpisodeConfig,
                cluster_config: ClusterConfig | None = None,
                weights: RewardWeights | None = None,
                rng: np.random.Generator | None = None,
                record_trajectory: bool = False,
                shadow_hybrid: bool = False,
                audit: bool = False) -> EpisodeReport:
    """Drive one episode to completion and collect metrics.

    Deterministic for a fixed (policy, trace, configs, rng seed). The
    livelock guard forces a single greedy placement after livelock_rounds
    consecutive no-progress rounds with an empty cluster and waiting jobs.
    """
    cluster_config = cluster_config or ClusterConfig()
    weights = weights or RewardWeights()
    if rng is None:
        rng = np.random.default_rng(episode_config.seed)
    params = episode_config.contention_params()
    cluster = ClusterState(cluster_config)
    states = {spec.id: JobState(spec=spec) for spec in trace}
    pending = sorted(range(len(trace)), key=lambda k: (trace[k].arrival_time, k))
    pending = [trace[k].id for k in pending]
    queue: list[int] = []
    checkpointing: list[tuple[float, int, int]] = []  # (ready time, seq, job id)
    preempt_seq = 0
    t = 0.0
    T = episode_config.round_interval
    rounds: list[RoundRecord] = []
    trajectory: list[tuple[RLDecision, float]] = []
    shadow_utils: list[tuple[float, float]] = []
    audit_rows: list[list[tuple]] = []
    stall_rounds = 0

    while True:
        while pending and states[pending[0]].spec.arrival_time <= t:
            jid = pending.pop(0)
            states[jid].submit_time = states[jid].spec.arrival_time
            queue.append(jid)
        # preempted jobs re-enter at the queue head once their checkpoint
        # is written (they cannot resume from a checkpoint that does not
        # exist yet)
        ready = sorted([e for e in checkpointing if e[0] <= t])
        if ready:
            checkpointing = [e for e in checkpointing if e[0] > t]
            queue[:0] = [jid for _, _, jid in ready]
            for _, _, jid in ready:
                states[jid].phase = Phase.WAITING
        if not queue and not cluster.placements and not pending and not checkpointing:
            break
        if len(rounds) >= episode_config.max_rounds:
            raise RuntimeError(f"episode exceeded {episode_config.max_rounds} rounds")

        queue_specs = [states[jid].spec for jid in queue]
        noop_reward = 0.0
        if record_trajectory:
            # counterfactual baseline: the reward this round would yield
            # if nothing were placed or preempted (a state-only quantity)
            cs_pre = _profile_cs(cluster, states, params, episode_config.contention_enabled)
            noop_reward = compute_reward(cluster, cs_pre, weights, episode_config.cs_cap)
        action: Action = policy.decide(cluster, queue_specs, states, rng)

        # livelock guard: empty cluster, waiting jobs, policy keeps skipping
        if not action.placements and not cluster.placements and queue:
            stall_rounds += 1
            if stall_rounds >= episode_config.livelock_rounds:
                fallback = decide_fifo_greedy(cluster, queue_specs)
                if fallback.placements:
                    log.warning("livelock guard forcing greedy placement at t=%s", t)
                    rl = action.rl
                    if rl is not None:
                        rl.forced = True
                    action = Action(placements=fallback.placements,
                                    preemptions=action.preemptions, rl=rl)
                    stall_rounds = 0
        else:
            stall_rounds = 0

        if shadow_hybrid:
            shadow = hybridize(action, cluster, queue_specs)
            added = sum(p.total_gpus for _, p in shadow.placements)
            if shadow is action:
                shadow_after = cluster.used_gpus() + sum(
                    p.total_gpus for _, p in action.placements)
            else:
                shadow_after = cluster.used_gpus() + added
            shadow_utils.append((0.0, shadow_after / cluster_config.total_gpus))

        preempted_now: list[int] = []
        for jid in action.preemptions:
            if states[jid].phase is not Phase.RUNNING:
                raise InvalidPlacementError(f"cannot preempt non-running job {jid}")
            _preempt(cluster, states[jid], episode_config)
            checkpointing.append((t + episode_config.checkpoint_grace, preempt_seq, jid))
            preempt_seq += 1
            preempted_now.append(jid)

        for jid, placement in action.placements:
            state = states[jid]
            if placement.total_gpus != state.spec.gpu_demand:
                raise InvalidPlacementError(
                    f"placement covers {placement.total_gpus} GPUs, "
                    f"job {jid} demands {state.spec.gpu_demand}")
            cluster.allocate(jid, placement)
            state.placement = placement
            state.phase = Phase.RUNNING
            if state.start_time is None:
                state.start_time = t
            queue.remove(jid)

        cs_map = _profile_cs(cluster, states, params, episode_config.contention_enabled)
        for jid, cs in cs_map.items():
            states[jid].last_cs = cs
        throughput = {jid: states[jid].spec.ideal_throughput / cs_map[jid]
                      for jid in cs_map}

        utilization = cluster.utilization()
        mean_cs = sum(cs_map.values()) / len(cs_map) if cs_map else 0.0
        reward = compute_reward(cluster, cs_map, weights, episode_config.cs_cap)
        if shadow_utils:
            base_after = utilization
            shadow_utils[-1] = (base_after, shadow_utils[-1][1])

        row = []
        finished: list[int] = []
        for jid in sorted(cluster.placements):
            state = states[jid]
            before = state.samples_done
            restore_before = state.restore_remaining
            active = advance(state, T, throughput[jid], now=t)
            state.cs_integral += cs_map[jid] * active
            state.placed_time += active
            if state.phase is Phase.FINISHED:
                finished.append(jid)
            if audit:
                burned = restore_before - state.restore_remaining
                row.append((jid, cs_map[jid], throughput[jid], before,
                            state.samples_done, active, burned))
        for jid in finished:
            cluster.free(jid)
            states[jid].placement = None

        threshold = episode_config.cs_preemption_threshold
        if threshold is not None:
            while cluster.placements:
                cs_now = _profile_cs(cluster, states, params,
                                     episode_config.contention_enabled)
                worst = max(cs_now, key=lambda j: (cs_now[j], states[j].spec.arrival_time, j))
                if cs_now[worst] <= threshold:
                    break
                _preempt(cluster, states[worst], episode_config)
                checkpointing.append((t + episode_config.checkpoint_grace, preempt_seq, worst))
                preempt_seq += 1
                preempted_now.append(worst)

        rounds.append(RoundRecord(
            time=t, utilization=utilization, mean_cs=mean_cs, reward=reward,
            num_running=len(cs_map), num_waiting=len(queue),
            num_placed=len(action.placements), num_preempted=len(preempted_now)))
        if record_trajectory and action.rl is not None:
            trajectory.append((action.rl, reward, noop_reward))
        if audit:
            audit_rows.append(row)
            cluster.audit()
        t += T

    job_records = []
    for jid in sorted(states):
        s = states[jid]
        job_records.append(JobRecord(
            id=jid, model=s.spec.model_class.value, demand=s.spec.gpu_demand,
            arrival=s.spec.arrival_time, start=s.start_time, finish=s.finish_time,
            jct=s.jct, preemptions=s.preemption_count, mean_cs=s.mean_cs,
            isolated_runtime=s.spec.isolated_runtime))
    return EpisodeReport(jobs=job_records, rounds=rounds,
                         aggregates=_aggregate(job_records, rounds),
                         trajectory=trajectory, shadow_utils=shadow_utils,
                         audit_rows=audit_rows)


METRICS = ("avg_jct", "p90_jct", "mean_util", "mean_cs")


@dataclass
class ComparisonReport:
    policies: list[str]
    per_policy: dict[str, dict]  # policy -> mean aggregates over traces
    per_trace: dict[str, list[dict]]  # policy -> per-trace aggregates
    deltas: dict[tuple[str, str], dict[str, float]]
    reports: dict[str, list[EpisodeReport]]


def compare_policies(policies, traces: list[list[JobSpec]],
                     episode_config: EpisodeConfig,
                     cluster_config: ClusterConfig | None = None,
                     weights: RewardWeights | None = None) -> ComparisonReport:
    """Run each named policy over each trace and tabulate pairwise deltas.

    policies: list of (name, policy object). Traces are shared across
    policies so deltas compare like for like.
    """
    per_trace: dict[str, list[dict]] = {}
    reports: dict[str, list[EpisodeReport]] = {}
    names = []
    for name, policy in policies:
        names.append(name)
        rows, reps = [], []
        for trace in traces:
            rep = run_episode(policy, trace, episode_config, cluster_config, weights)
            rows.append(rep.aggregates)
            reps.append(rep)
        per_trace[name] = rows
        reports[name] = reps
    per_policy = {}
    for name in names:
        rows = per_trace[name]
        per_policy[name] = {m: sum(r[m] for r in rows) / len(rows) for m in METRICS}
        per_policy[name]["total_preemptions"] = sum(r["total_preemptions"] for r in rows)
    deltas = {}
    for a in names:
        for b in names:
            if a == b:
                continue
            deltas[(a, b)] = {
                m: 100.0 * (per_policy[a][m] - per_policy[b][m]) / per_policy[b][m]
                if per_policy[b][m] != 0 else 0.0
                for m in METRICS}
    return ComparisonReport(policies=names, per_policy=per_policy,
                            per_trace=per_trace, deltas=deltas, reports=reports)
