#!/usr/bin/env python3
"""Train reward-weight branches A-E and evaluate RL-base / RL-Hybrid
against LAS and SRTF, emitting the per-branch (avg JCT, utilization)
scatter points plus full comparison reports for one trace family.

Usage:
    python scripts/run_branch_sweep.py --mix normal --out runs/sweep-normal
    python scripts/run_branch_sweep.py --mix heavy --eval-seeds 5 --jobs 64
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from consched.cluster import ClusterConfig
from consched.engine import EpisodeConfig, run_episode
from consched.policies import RLBasePolicy, RLHybridPolicy, make_policy
from consched.reports import write_csv, write_points, write_training_curves
from consched.rl.reward import BRANCHES
from consched.rl.train import TrainConfig, make_net, train
from consched.workload import MIX_PRESETS, TraceSpec, generate_trace


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mix", default="normal", choices=sorted(MIX_PRESETS))
    parser.add_argument("--jobs", type=int, default=64)
    parser.add_argument("--episodes", type=int, default=20)
    parser.add_argument("--train-seed", type=int, default=101)
    parser.add_argument("--eval-seeds", type=int, default=5)
    parser.add_argument("--seed0", type=int, default=201, help="first eval trace seed")
    parser.add_argument("--out", default="runs/branch-sweep")
    args = parser.parse_args()

    cluster = ClusterConfig()
    ep_system = EpisodeConfig()  # RL runs under CS-threshold preemption
    ep_classic = EpisodeConfig(cs_preemption_threshold=None)  # agnostic baselines
    os.makedirs(args.out, exist_ok=True)

    train_trace = generate_trace(TraceSpec(
        num_jobs=args.jobs, seed=args.train_seed, mix=MIX_PRESETS[args.mix]))
    eval_traces = [generate_trace(TraceSpec(
        num_jobs=args.jobs, seed=args.seed0 + k, mix=MIX_PRESETS[args.mix]))
        for k in range(args.eval_seeds)]

    def evaluate(policy, episode_config):
        reports = [run_episode(policy, t, episode_config, cluster) for t in eval_traces]
        return {
            "avg_jct": float(np.mean([r.aggregates["avg_jct"] for r in reports])),
            "p90_jct": float(np.mean([r.aggregates["p90_jct"] for r in reports])),
            "mean_util": float(np.mean([r.aggregates["mean_util"] for r in reports])),
            "mean_cs": float(np.mean([r.aggregates["mean_cs"] for r in reports])),
        }

    rows, scatter = [], []
    for name in ("las", "srtf", "greedy"):
        agg = evaluate(make_policy(name), ep_classic)
        rows.append((name, agg["avg_jct"], agg["p90_jct"], agg["mean_util"], agg["mean_cs"]))
        scatter.append((agg["avg_jct"], agg["mean_util"]))
        print(f"{name:12s} avg_jct={agg['avg_jct']:8.1f} util={agg['mean_util']:.3f} "
              f"cs={agg['mean_cs']:.3f}")

    _, space = make_net(cluster, TrainConfig())
    for branch, weights in BRANCHES.items():
        ckpt = os.path.join(args.out, f"branch_{branch}.ckpt")
        cfg = TrainConfig(episodes=args.episodes, seed=0, weights=weights,
                          episode=ep_system, checkpoint_path=ckpt)
        net, curves = train(train_trace, cfg, cluster)
        write_training_curves(os.path.join(args.out, f"branch_{branch}_curves.csv"),
                              curves, {"branch": branch, "mix": args.mix})
        for label, policy in ((f"rl-base-{branch}", RLBasePolicy(net, space)),
                              (f"rl-hybrid-{branch}", RLHybridPolicy(net, space))):
            agg = evaluate(policy, ep_system)
            rows.append((label, agg["avg_jct"], agg["p90_jct"],
                         agg["mean_util"], agg["mean_cs"]))
            scatter.append((agg["avg_jct"], agg["mean_util"]))
            print(f"{label:12s} avg_jct={agg['avg_jct']:8.1f} util={agg['mean_util']:.3f} "
                  f"cs={agg['mean_cs']:.3f}")

    provenance = {"mix": args.mix, "jobs": args.jobs, "episodes": args.episodes,
                  "train_seed": args.train_seed, "eval_seeds": args.eval_seeds}
    write_csv(os.path.join(args.out, "sweep.csv"),
              ("policy", "avg_jct", "p90_jct", "mean_util", "mean_cs"),
              rows, provenance)
    write_points(os.path.join(args.out, "jct_util_scatter.csv"), scatter,
                 "avg_jct,mean_util (rows follow sweep.csv order)", provenance)
    print(f"wrote {args.out}/sweep.csv and jct_util_scatter.csv")


if __name__ == "__main__":
    main()
