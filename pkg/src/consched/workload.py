"""Job specifications, lifecycle state, progress accounting, and traces.

A trace is a list of JobSpec. Communication mixes follow the four named
ratios over GNN:IMG:DLRM:LM:FSDP:MoE. Per-job configuration variety is
abstracted as +-20% multiplicative jitter on avg_bandwidth and
comm_comp_ratio. Every job's isolated runtime is total_samples /
ideal_throughput; the default of 60 sim-seconds is one "hour" at the
default 1/60 time scale.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cluster import ClusterConfig, Placement, demand_shapes
from .contention import DEFAULT_PROFILES, CommPattern, ModelClass, ModelProfile
from .errors import ConfigError, StateError, TraceParseError

MIX_PRESETS = {
    "normal": (1, 1, 1, 1, 1, 1),
    "heavy": (1, 1, 1, 1, 4, 4),
    "medium": (1, 1, 4, 4, 1, 1),
    "low": (4, 4, 1, 1, 1, 1),
}

MODEL_ORDER = [ModelClass.GNN, ModelClass.IMG, ModelClass.DLRM,
               ModelClass.LM, ModelClass.FSDP, ModelClass.MoE]


@dataclass(frozen=True)
class JobSpec:
    """One distributed training job's demand and communication profile."""

    id: int
    model_class: ModelClass
    gpu_demand: int
    total_samples: float
    arrival_time: float
    profile: ModelProfile
    isolated_runtime: float

    @property
    def ideal_throughput(self) -> float:
        """Samples/s with no contention; total_samples / isolated_runtime."""
        return self.total_samples / self.isolated_runtime


class Phase(enum.Enum):
    WAITING = "waiting"
    RUNNING = "running"
    PREEMPTED = "preempted"
    FINISHED = "finished"


@dataclass
class JobState:
    """Mutable lifecycle state of one job within an episode."""

    spec: JobSpec
    phase: Phase = Phase.WAITING
    samples_done: float = 0.0
    attained_service: float = 0.0  # GPU-seconds
    submit_time: float | None = None
    start_time: float | None = None
    finish_time: float | None = None
    placement: Placement | None = None
    preemption_count: int = 0
    restore_remaining: float = 0.0
    last_cs: float = 0.0  # most recent profiled CS; 0 before first profile
    cs_integral: float = 0.0  # integral of CS over placed time
    placed_time: float = 0.0

    @property
    def remaining_samples(self) -> float:
        return self.spec.total_samples - self.samples_done

    @property
    def remaining_time_ideal(self) -> float:
        """Contention-free estimate of time to finish."""
        return self.remaining_samples / self.spec.ideal_throughput

    @property
    def fraction_done(self) -> float:
        return self.samples_done / self.spec.total_samples

    @property
    def jct(self) -> float | None:
        if self.finish_time is None:
            return None
        return self.finish_time - self.spec.arrival_time

    @property
    def mean_cs(self) -> float:
        return self.cs_integral / self.placed_time if self.placed_time > 0 else 0.0


def advance(job: JobState, dt: float, throughput: float, now: float) -> float:
    """Integrate progress over a round of length dt at a fixed throughput.

    A pending restore penalty is burned before samples accrue. If the job
    finishes inside the interval the finish timestamp is the exact
    crossing time. Returns the active time consumed (min(dt, crossing)),
    which the caller uses to weight CS exposure.
    """
    if job.phase is not Phase.RUNNING:
        raise StateError(f"cannot advance job {job.spec.id} in phase {job.phase.value}")
    if dt < 0:
        raise StateError("dt must be >= 0")
    if dt == 0:
        return 0.0
    penalty = min(job.restore_remaining, dt)
    job.restore_remaining -= penalty
    progress_window = dt - penalty
    gained = throughput * progress_window
    if gained >= job.remaining_samples and throughput > 0:
        to_finish = job.remaining_samples / throughput
        active = penalty + to_finish
        job.samples_done = job.spec.total_samples
        job.attained_service += job.spec.gpu_demand * active
        job.finish_time = now + active
        job.phase = Phase.FINISHED
        return active
    job.samples_done += gained
    job.attained_service += job.spec.gpu_demand * dt
    return dt


def feasible_demands(config: ClusterConfig, cap: int = 32) -> list[int]:
    """Demands in [1, cap] expressible as j * 2^i on the cluster shape."""
    out = [d for d in range(1, min(cap, config.total_gpus) + 1)
           if demand_shapes(config, d)]
    return out


# Default demand histogram (demand -> weight) on an 8-GPU-per-node
# cluster: mostly sub-node jobs with odd sizes that fragment nodes and
# even sizes that can span them, plus a node-scale and two-node tail.
# Mirrors the small-job-heavy demographics of published cluster traces
# while keeping node-spanning placements common.
DEFAULT_DEMAND_WEIGHTS = {3: 0.15, 4: 0.25, 5: 0.15, 6: 0.15, 8: 0.20, 12: 0.10}


def demand_weights(config: ClusterConfig, cap: int = 32,
                   profile: str = "small-skew") -> tuple[list[int], np.ndarray]:
    """(feasible demands, sampling probabilities) for a demand profile.

    "small-skew" uses DEFAULT_DEMAND_WEIGHTS restricted to feasible
    demands (renormalized; falls back to uniform if none are feasible);
    "uniform" is uniform over all feasible demands.
    """
    demands = feasible_demands(config, cap)
    if profile == "uniform":
        probs = np.full(len(demands), 1.0 / len(demands))
        return demands, probs
    if profile != "small-skew":
        raise ConfigError(f"unknown demand profile {profile!r}")
    probs = np.array([DEFAULT_DEMAND_WEIGHTS.get(d, 0.0) for d in demands])
    if probs.sum() <= 0:
        probs = np.full(len(demands), 1.0 / len(demands))
    else:
        probs = probs / probs.sum()
    return demands, probs


def demand_sampler(seed: int, config: ClusterConfig | None = None, cap: int = 32,
                   profile: str = "small-skew"):
    """Deterministic sampler of schedulable GPU demands."""
    demands, probs = demand_weights(config or ClusterConfig(), cap, profile)
    rng = np.random.default_rng(seed)

    def sample() -> int:
        return int(demands[rng.choice(len(demands), p=probs)])

    return sample


@dataclass(frozen=True)
class TraceSpec:
    """Recipe for one generated job set."""

    num_jobs: int
    mix: tuple[float, ...] = MIX_PRESETS["normal"]
    seed: int = 0
    isolated_hours: float = 1.0
    time_scale: float = 1.0 / 60.0
    ideal_throughput: float = 10.0
    jitter: float = 0.2
    demand_cap: int = 32
    demand_profile: str = "small-skew"  # or "uniform"
    arrival: str = "all-at-zero"  # or "poisson"
    arrival_rate: float = 1.0  # jobs per sim-second, poisson mode only

    def __post_init__(self):
        if self.num_jobs < 1:
            raise ConfigError("num_jobs must be >= 1")
        if len(self.mix) != len(MODEL_ORDER) or any(r <= 0 for r in self.mix):
            raise ConfigError("mix needs 6 positive ratios")
        if self.arrival not in ("all-at-zero", "poisson"):
            raise ConfigError(f"unknown arrival process {self.arrival!r}")
        if self.isolated_hours <= 0 or self.time_scale <= 0 or self.ideal_throughput <= 0:
            raise ConfigError("isolated_hours, time_scale, ideal_throughput must be positive")

    @property
    def isolated_runtime(self) -> float:
        """Isolated runtime in sim-seconds."""
        return 3600.0 * self.isolated_hours * self.time_scale


def generate_trace(spec: TraceSpec, cluster_config: ClusterConfig | None = None) -> list[JobSpec]:
    """Sample a job set; deterministic for a fixed spec."""
    config = cluster_config or ClusterConfig()
    rng = np.random.default_rng(spec.seed)
    ratios = np.asarray(spec.mix, dtype=float)
    probs = ratios / ratios.sum()
    demands, demand_probs = demand_weights(config, spec.demand_cap, spec.demand_profile)
    if spec.arrival == "poisson":
        gaps = rng.exponential(1.0 / spec.arrival_rate, size=spec.num_jobs)
        arrivals = np.cumsum(gaps)
        arrivals[0] = 0.0
    else:
        arrivals = np.zeros(spec.num_jobs)
    jobs = []
    for k in range(spec.num_jobs):
        model = MODEL_ORDER[rng.choice(len(MODEL_ORDER), p=probs)]
        demand = int(demands[rng.choice(len(demands), p=demand_probs)])
        base = DEFAULT_PROFILES[model]
        lo, hi = 1.0 - spec.jitter, 1.0 + spec.jitter
        profile = ModelProfile(
            model_class=model,
            avg_bandwidth=base.avg_bandwidth * rng.uniform(lo, hi),
            comm_comp_ratio=base.comm_comp_ratio * rng.uniform(lo, hi),
            comm_pattern=base.comm_pattern,
        )
        jobs.append(JobSpec(
            id=k,
            model_class=model,
            gpu_demand=demand,
            total_samples=spec.ideal_throughput * spec.isolated_runtime,
            arrival_time=float(arrivals[k]),
            profile=profile,
            isolated_runtime=spec.isolated_runtime,
        ))
    return jobs


def _mix_str(mix) -> str:
    return ":".join(repr(float(r)) if float(r) != int(r) else str(int(r)) for r in mix)


def parse_mix(text: str) -> tuple[float, ...]:
    if text in MIX_PRESETS:
        return MIX_PRESETS[text]
    parts = text.split(":")
    if len(parts) != 6:
        raise ConfigError(f"mix {text!r} is not a preset name or 6 ratios")
    return tuple(float(p) for p in parts)


def write_trace(jobs: list[JobSpec], spec: TraceSpec, path) -> None:
    """Line-delimited key=value records with a provenance header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# trace num_jobs={spec.num_jobs} mix={_mix_str(spec.mix)} "
                 f"seed={spec.seed} isolated_hours={spec.isolated_hours!r} "
                 f"time_scale={spec.time_scale!r} ideal_throughput={spec.ideal_throughput!r} "
                 f"jitter={spec.jitter!r} demand_cap={spec.demand_cap} "
                 f"demand_profile={spec.demand_profile} "
                 f"arrival={spec.arrival} arrival_rate={spec.arrival_rate!r}\n")
        for job in jobs:
            fh.write(f"id={job.id} model={job.model_class.value} demand={job.gpu_demand} "
                     f"total_samples={job.total_samples!r} arrival={job.arrival_time!r} "
                     f"isolated_runtime={job.isolated_runtime!r} "
                     f"avg_bandwidth={job.profile.avg_bandwidth!r} "
                     f"comm_comp_ratio={job.profile.comm_comp_ratio!r} "
                     f"comm_pattern={job.profile.comm_pattern.value}\n")


def read_trace(path) -> tuple[list[JobSpec], dict]:
    """Parse a trace file; returns (jobs, header fields)."""
    jobs = []
    header: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("# ").strip()
                if body.startswith("trace "):
                    for token in body[len("trace "):].split():
                        key, _, value = token.partition("=")
                        header[key] = value
                continue
            fields = {}
            for token in line.split():
                key, sep, value = token.partition("=")
                if not sep:
                    raise TraceParseError(f"bad token {token!r}", line=lineno)
                fields[key] = value
            try:
                model = ModelClass(fields["model"])
                profile = ModelProfile(
                    model_class=model,
                    avg_bandwidth=float(fields["avg_bandwidth"]),
                    comm_comp_ratio=float(fields["comm_comp_ratio"]),
                    comm_pattern=CommPattern(fields["comm_pattern"]),
                )
                jobs.append(JobSpec(
                    id=int(fields["id"]),
                    model_class=model,
                    gpu_demand=int(fields["demand"]),
                    total_samples=float(fields["total_samples"]),
                    arrival_time=float(fields["arrival"]),
                    profile=profile,
                    isolated_runtime=float(fields["isolated_runtime"]),
                ))
            except (KeyError, ValueError) as exc:
                raise TraceParseError(f"bad job record: {exc}", line=lineno) from exc
    return jobs, header


def shuffle_arrival_order(jobs: list[JobSpec], rng: np.random.Generator) -> list[JobSpec]:
    """Re-draw the arrival order of an all-at-zero job set (new episode)."""
    order = rng.permutation(len(jobs))
    return [jobs[k] for k in order]
