"""Fixed-shape observation tensor and candidate-job selection.

The observation has shape [num_nodes, 2 * gpus_per_node, FEATURE_DIM].
The left half mirrors the occupancy grid: each occupied GPU slot holds
the resident job's feature vector. The right half indexes demand shapes:
row i, column j-1 holds a candidate whose demand factors as j * 2^i
(2^i nodes with j GPUs each); a demand with several factorizations
appears in several slots. Unused slots are all zeros, so the tensor
shape never depends on queue length or running-job count.

Feature vector (FEATURE_DIM = 10), all values in [0, 1]:
  [0:6]  model-class one-hot
  [6]    comm/comp ratio / ratio_scale, clipped at 1
  [7]    avg bandwidth / bandwidth_scale, clipped at 1
  [8]    last profiled CS, clipped at cs_cap, / cs_cap (0 if never profiled)
  [9]    fraction of work done
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import ClusterState, demand_shapes
from .errors import ConfigError
from .workload import MODEL_ORDER, JobSpec, JobState

FEATURE_DIM = 10


@dataclass(frozen=True)
class FeatureConfig:
    """Normalization constants; fixed so encodings compare across episodes."""

    bandwidth_scale: float = 3000.0
    ratio_scale: float = 15.0
    cs_cap: float = 4.0

    def __post_init__(self):
        if min(self.bandwidth_scale, self.ratio_scale, self.cs_cap) <= 0:
            raise ConfigError("feature normalization constants must be positive")


_MODEL_INDEX = {m: k for k, m in enumerate(MODEL_ORDER)}


def select_candidates(queue: list[JobSpec], k: int) -> list[JobSpec]:
    """Up to k jobs with pairwise distinct demands, scanning from the head."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    picked: list[JobSpec] = []
    seen: set[int] = set()
    for job in queue:
        if job.gpu_demand not in seen:
            picked.append(job)
            seen.add(job.gpu_demand)
            if len(picked) == k:
                break
    return picked


def feature_vector(spec: JobSpec, state: JobState, cfg: FeatureConfig) -> np.ndarray:
    vec = np.zeros(FEATURE_DIM)
    vec[_MODEL_INDEX[spec.model_class]] = 1.0
    vec[6] = min(spec.profile.comm_comp_ratio / cfg.ratio_scale, 1.0)
    vec[7] = min(spec.profile.avg_bandwidth / cfg.bandwidth_scale, 1.0)
    vec[8] = min(max(state.last_cs, 0.0), cfg.cs_cap) / cfg.cs_cap
    vec[9] = state.fraction_done
    return vec


def encode_state(cluster: ClusterState,
                 candidates: list[JobSpec],
                 job_states: dict[int, JobState],
                 cfg: FeatureConfig | None = None) -> np.ndarray:
    """Pure function (cluster, candidates, job states) -> observation tensor."""
    cfg = cfg or FeatureConfig()
    config = cluster.config
    n, g = config.num_nodes, config.gpus_per_node
    tensor = np.zeros((n, 2 * g, FEATURE_DIM))
    cache: dict[int, np.ndarray] = {}
    for node in range(n):
        for slot in range(g):
            job_id = int(cluster.occupancy[node, slot])
            if job_id < 0:
                continue
            if job_id not in cache:
                state = job_states[job_id]
                cache[job_id] = feature_vector(state.spec, state, cfg)
            tensor[node, slot] = cache[job_id]
    for cand in candidates:
        vec = feature_vector(cand, job_states[cand.id], cfg)
        for i, j in demand_shapes(config, cand.gpu_demand):
            tensor[i, g + j - 1] = vec
    return tensor


def dump_state_csv(tensor: np.ndarray, path) -> None:
    """Write the tensor as one CSV grid per feature channel, for inspection."""
    n, cols, fdim = tensor.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# state tensor {n}x{cols}x{fdim}; one grid per feature channel\n")
        for f in range(fdim):
            fh.write(f"# feature {f}\n")
            for node in range(n):
                fh.write(",".join(repr(float(v)) for v in tensor[node, :, f]) + "\n")
