"""Contention sensitivity: per-job slowdown from sharing network links.

CS is the ratio of a job's isolated throughput to its throughput under
co-location, so CS >= 1 and CS == 1 means no degradation. Two modes:

* synthetic: a bandwidth-sharing model. A job's communication-time
  fraction is f = r / (1 + r) with r its comm/comp ratio. Multi-node
  placements spread the job's average bandwidth evenly over their nodes
  and load the inter-node link; single-node placements load the
  intra-node bus. A link oversubscribed by factor s stretches the
  communication phase by s, so CS = 1 + f * (max-node oversubscription - 1).
  Zero comm/comp overlap is assumed (worst case).

* table: calibrated per (model, shape) pair lookups, combined across
  co-located jobs with a pairwise max; missing entries fall back to the
  synthetic model evaluated for that single pair.

In both modes a job with no node-sharing neighbor has CS exactly 1.0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .cluster import ClusterConfig, Placement
from .errors import ConfigError, StateError, TraceParseError


class ModelClass(enum.Enum):
    GNN = "GNN"
    IMG = "IMG"
    DLRM = "DLRM"
    LM = "LM"
    FSDP = "FSDP"
    MoE = "MoE"


class CommPattern(enum.Enum):
    ALL_REDUCE = "AllReduce"
    REDUCE_SCATTER_ALL_GATHER = "ReduceScatter+AllGather"
    ALL_TO_ALL = "AllToAll"


@dataclass(frozen=True)
class ModelProfile:
    """Communication profile of one workload class.

    avg_bandwidth is the job's average network consumption in MB/s,
    comm_comp_ratio the communication-to-computation time ratio.
    """

    model_class: ModelClass
    avg_bandwidth: float
    comm_comp_ratio: float
    comm_pattern: CommPattern

    def __post_init__(self):
        if self.avg_bandwidth <= 0:
            raise ConfigError("avg_bandwidth must be positive")
        if self.comm_comp_ratio <= 0:
            raise ConfigError("comm_comp_ratio must be positive")

    @property
    def comm_fraction(self) -> float:
        """Fraction of step time spent communicating, assuming no overlap."""
        r = self.comm_comp_ratio
        return r / (1.0 + r)


# Profiled per-class averages used as defaults for trace generation.
DEFAULT_PROFILES: dict[ModelClass, ModelProfile] = {
    ModelClass.GNN: ModelProfile(ModelClass.GNN, 24.63, 0.57, CommPattern.ALL_REDUCE),
    ModelClass.IMG: ModelProfile(ModelClass.IMG, 211.25, 2.43, CommPattern.ALL_REDUCE),
    ModelClass.DLRM: ModelProfile(ModelClass.DLRM, 170.28, 13.36, CommPattern.ALL_REDUCE),
    ModelClass.LM: ModelProfile(ModelClass.LM, 854.82, 1.87, CommPattern.ALL_REDUCE),
    ModelClass.FSDP: ModelProfile(
        ModelClass.FSDP, 2672.40, 7.32, CommPattern.REDUCE_SCATTER_ALL_GATHER),
    ModelClass.MoE: ModelProfile(ModelClass.MoE, 929.48, 13.79, CommPattern.ALL_TO_ALL),
}

Shape = tuple[int, int]  # (i, j): 2^i nodes, j GPUs on each


def shape_of(placement: Placement) -> Shape:
    n = len(placement.nodes)
    return (n.bit_length() - 1, placement.gpus_per_node_used)


class CSTable:
    """Pairwise CS lookups keyed by ((target model, shape), (coloc model, shape)).

    Shapes are (i, j) with 2^i nodes and j GPUs per node. Values are
    asymmetric: CS(A|B) generally differs from CS(B|A).
    """

    def __init__(self, entries: dict[tuple[tuple[ModelClass, Shape], tuple[ModelClass, Shape]], float] | None = None):
        self.entries = {}
        for key, value in (entries or {}).items():
            self.add(key[0], key[1], value)

    def add(self, target: tuple[ModelClass, Shape], coloc: tuple[ModelClass, Shape], value: float):
        if value < 1.0:
            raise ConfigError(f"CS value {value} < 1.0 for {target} | {coloc}")
        self.entries[(target, coloc)] = float(value)

    def lookup(self, target: tuple[ModelClass, Shape], coloc: tuple[ModelClass, Shape]) -> float | None:
        return self.entries.get((target, coloc))

    def block_max(self, target_model: ModelClass, coloc_model: ModelClass) -> tuple[float, tuple[Shape, Shape]] | None:
        """Max value over all shape pairs for one (target, coloc) model pair."""
        best = None
        for ((tm, ts), (cm, cs)), value in sorted(self.entries.items(), key=lambda kv: (kv[0][0][1], kv[0][1][1])):
            if tm is target_model and cm is coloc_model:
                if best is None or value > best[0]:
                    best = (value, (ts, cs))
        return best

    def __len__(self):
        return len(self.entries)


@dataclass
class ContentionParams:
    """Which CS mode to use; table mode requires a table."""

    mode: str = "synthetic"  # "synthetic" | "table"
    table: CSTable | None = None

    def __post_init__(self):
        if self.mode not in ("synthetic", "table"):
            raise ConfigError(f"unknown contention mode {self.mode!r}")
        if self.mode == "table" and self.table is None:
            raise ConfigError("table mode requires a CS table")


def _per_node_demands(jobs: list[tuple[ModelProfile, Placement]]):
    """Per node: (total resident demand in MB/s, hosts-a-multi-node-job).

    A job's per-node demand is its avg_bandwidth divided by the node
    count of its placement, so a single-node job loads its node with its
    full profiled bandwidth.
    """
    total: dict[int, float] = {}
    has_multi: dict[int, bool] = {}
    for profile, placement in jobs:
        n = len(placement.nodes)
        share = profile.avg_bandwidth / n
        for node in placement.nodes:
            total[node] = total.get(node, 0.0) + share
            if n > 1:
                has_multi[node] = True
    return total, has_multi


def _synthetic_cs(target: tuple[ModelProfile, Placement],
                  others: list[tuple[ModelProfile, Placement]],
                  cluster_config: ClusterConfig) -> float:
    """Slowdown from the most oversubscribed node the target occupies.

    A node hosting any inter-node traffic is judged against the
    inter-node bandwidth: on PCIe-attached GPUs, NIC flows and local
    collectives cross the same host path, so every resident's demand
    counts. A node whose residents all communicate internally is judged
    against the intra-node bus, which is rarely the binding constraint.
    The communication fraction f = r / (1 + r) converts the stretch into
    a throughput ratio: CS = 1 + f * (worst oversubscription - 1).
    """
    profile, placement = target
    total, has_multi = _per_node_demands([target] + list(others))
    multi = len(placement.nodes) > 1
    worst = 1.0
    for node in placement.nodes:
        demand = total.get(node, 0.0)
        if multi or has_multi.get(node, False):
            s = demand / cluster_config.inter_node_bandwidth
        else:
            s = demand / cluster_config.intra_node_bandwidth
        worst = max(worst, s)
    return 1.0 + profile.comm_fraction * (worst - 1.0)


def contention_sensitivity(job: tuple[ModelProfile, Placement],
                           colocated: list[tuple[ModelProfile, Placement]],
                           params: ContentionParams,
                           cluster_config: ClusterConfig) -> float:
    """CS of the target job given the jobs it shares nodes with.

    Returns exactly 1.0 when no co-located job shares a node with the
    target. colocated must not contain the target itself.
    """
    profile, placement = job
    if placement is None:
        raise StateError("contention_sensitivity requires a placed job")
    mine = set(placement.nodes)
    sharing = [(p, pl) for (p, pl) in colocated if mine.intersection(pl.nodes)]
    if not sharing:
        return 1.0
    if params.mode == "synthetic":
        return _synthetic_cs(job, sharing, cluster_config)
    # table mode: pairwise max over sharing neighbors, synthetic fallback
    target_key = (profile.model_class, shape_of(placement))
    cs = 1.0
    for other_profile, other_placement in sharing:
        value = params.table.lookup(target_key, (other_profile.model_class, shape_of(other_placement)))
        if value is None:
            value = _synthetic_cs(job, [(other_profile, other_placement)], cluster_config)
        cs = max(cs, value)
    return cs


def contended_throughput(ideal_throughput: float,
                         job: tuple[ModelProfile, Placement],
                         colocated: list[tuple[ModelProfile, Placement]],
                         params: ContentionParams,
                         cluster_config: ClusterConfig) -> float:
    """Ideal throughput divided by the job's contention sensitivity."""
    return ideal_throughput / contention_sensitivity(job, colocated, params, cluster_config)


def feasible_shapes(config: ClusterConfig) -> list[Shape]:
    """All (i, j) placement shapes that fit the cluster, sorted."""
    return [(i, j)
            for i in config.node_exponents()
            for j in range(1, config.gpus_per_node + 1)]


# Calibration behind the shipped default table. Published measurements
# pin four numbers: FSDP suffers up to 1.96 against MoE, MoE up to 3.00
# against FSDP, and the moderate FSDP/IMG pairing tops out at 1.35 and
# 1.43. The remaining constants extend those anchors along the profiled
# communication characteristics: DLRM and LM sit between IMG and MoE in
# sensitivity (high comm/comp, mid bandwidth), GNN stays flat-low, and a
# contender's weight grows with the traffic it injects. All of it is
# calibration, not measured ground truth.
TARGET_MAX_CS: dict[ModelClass, float] = {
    ModelClass.FSDP: 1.96,  # published
    ModelClass.MoE: 3.00,  # published
    ModelClass.IMG: 1.43,  # published
    ModelClass.DLRM: 2.40,  # calibrated: most comm-bound AllReduce class
    ModelClass.LM: 1.70,  # calibrated: bandwidth-heavy, low comm/comp
    ModelClass.GNN: 1.10,  # calibrated: consistently insensitive
}

# Each target's worst contender takes weight 1.0 (its TARGET_MAX_CS is
# reached there); other contenders scale by injected-traffic weight.
WORST_CONTENDER: dict[ModelClass, ModelClass] = {
    ModelClass.FSDP: ModelClass.MoE,
    ModelClass.MoE: ModelClass.FSDP,
    ModelClass.IMG: ModelClass.FSDP,
    ModelClass.DLRM: ModelClass.FSDP,
    ModelClass.LM: ModelClass.FSDP,
    ModelClass.GNN: ModelClass.FSDP,
}

CONTENDER_WEIGHT: dict[ModelClass, float] = {
    ModelClass.FSDP: 0.95,
    ModelClass.MoE: 0.80,
    ModelClass.LM: 0.55,
    ModelClass.DLRM: 0.45,
    ModelClass.IMG: 0.30,
    ModelClass.GNN: 0.10,
}

# Keeps FSDP|IMG at its published 1.35 (= 1 + 0.96 * 0.365).
FSDP_IMG_WEIGHT = 0.35 / 0.96


def _shape_factor(target_shape: Shape, coloc_shape: Shape) -> float:
    """How concentrated the pair's traffic is on the shared node.

    A single-node placement puts its whole bandwidth on one node; a
    2^i-node placement spreads it, so pressure falls off as 1/2^i.
    """
    return (1.0 / (2 ** target_shape[0]) + 1.0 / (2 ** coloc_shape[0])) / 2.0


def default_cs_table(cluster_config: ClusterConfig | None = None,
                     profiles: dict[ModelClass, ModelProfile] | None = None) -> CSTable:
    """The shipped calibrated table.

    entry(target, target_shape, coloc, coloc_shape) =
        1 + (TARGET_MAX_CS[target] - 1) * weight(coloc | target)
          * shape_factor(target_shape, coloc_shape)

    with weight 1.0 for the target's worst contender, so the published
    extremes are block maxima exactly (attained at single-node shape
    pairs, where the shared node carries both jobs' full traffic).
    """
    config = cluster_config or ClusterConfig()
    shapes = feasible_shapes(config)
    table = CSTable()
    for tm in ModelClass:
        spread = TARGET_MAX_CS[tm] - 1.0
        for cm in ModelClass:
            if cm is WORST_CONTENDER[tm]:
                weight = 1.0
            elif (tm, cm) == (ModelClass.FSDP, ModelClass.IMG):
                weight = FSDP_IMG_WEIGHT
            else:
                weight = CONTENDER_WEIGHT[cm]
            for ts in shapes:
                for cs in shapes:
                    factor = _shape_factor(ts, cs)
                    value = 1.0 + spread * weight * factor
                    if factor == 1.0 and weight == 1.0:
                        value = TARGET_MAX_CS[tm]
                    table.add((tm, ts), (cm, cs), value)
    return table


def load_cs_table(path) -> CSTable:
    """Parse a CS table file.

    One record per line: target_model,target_nodes,target_gpus_per_node,
    coloc_model,coloc_nodes,coloc_gpus_per_node,cs_value. '#' starts a
    comment. Node counts must be powers of two; values must be >= 1.
    """
    table = CSTable()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 7:
                raise TraceParseError(f"expected 7 fields, got {len(parts)}", line=lineno)
            try:
                tm = ModelClass(parts[0])
                cm = ModelClass(parts[3])
                t_nodes, t_gpus = int(parts[1]), int(parts[2])
                c_nodes, c_gpus = int(parts[4]), int(parts[5])
                value = float(parts[6])
            except (ValueError, KeyError) as exc:
                raise TraceParseError(str(exc), line=lineno) from exc
            for nodes in (t_nodes, c_nodes):
                if nodes < 1 or (nodes & (nodes - 1)) != 0:
                    raise TraceParseError(f"node count {nodes} is not a power of two", line=lineno)
            if value < 1.0:
                raise TraceParseError(f"CS value {value} < 1.0", line=lineno)
            t_shape = (t_nodes.bit_length() - 1, t_gpus)
            c_shape = (c_nodes.bit_length() - 1, c_gpus)
            table.add((tm, t_shape), (cm, c_shape), value)
    return table


def write_cs_table(table: CSTable, path) -> None:
    """Write a table in the load_cs_table format (deterministic order)."""
    keys = sorted(table.entries,
                  key=lambda k: (k[0][0].value, k[0][1], k[1][0].value, k[1][1]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# target_model,target_nodes,target_gpus_per_node,"
                 "coloc_model,coloc_nodes,coloc_gpus_per_node,cs_value\n")
        for (tm, ts), (cm, cs) in keys:
            value = table.entries[((tm, ts), (cm, cs))]
            fh.write(f"{tm.value},{2 ** ts[0]},{ts[1]},{cm.value},{2 ** cs[0]},{cs[1]},{value!r}\n")
