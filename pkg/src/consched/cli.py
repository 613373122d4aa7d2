"""Command-line entry point: gen-trace, train, eval, compare.

Every command is deterministic given its flags (seed included); output
files embed the resolved configuration. Exit codes: 0 success, 2 usage
error, 3 file/parse error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .actions import ActionSpace
from .cluster import ClusterConfig
from .config import merge_config, output_root, parse_config_file
from .contention import ContentionParams, load_cs_table
from .encoding import encode_state, select_candidates, dump_state_csv
from .engine import (EpisodeConfig, compare_policies, default_contention_params,
                     run_episode)
from .errors import (CheckpointError, ConfigError, ConschedError, TraceParseError,
                     UsageError)
from .policies import POLICY_KINDS, make_policy
from .rl.checkpoint import ensure_compatible, load_checkpoint
from .rl.reward import BRANCHES, RewardWeights
from .rl.train import TrainConfig, make_net, train
from .reports import (write_comparison, write_episode_report, write_summary,
                      write_training_curves)
from .workload import (MIX_PRESETS, TraceSpec, generate_trace, parse_mix,
                       read_trace, write_trace)

EXIT_USAGE = 2
EXIT_FILE = 3
EXIT_RUNTIME = 4


def _add_cluster_flags(parser):
    parser.add_argument("--nodes", type=int, default=None, help="cluster nodes (default 4)")
    parser.add_argument("--gpus-per-node", type=int, default=None, help="GPUs per node (default 8)")
    parser.add_argument("--inter-bw", type=float, default=None,
                        help="inter-node bandwidth MB/s (default 1250)")
    parser.add_argument("--intra-bw", type=float, default=None,
                        help="intra-node bus bandwidth MB/s (default 16000)")


def _add_episode_flags(parser):
    parser.add_argument("--round-interval", type=float, default=None,
                        help="scheduling round length in sim-seconds (default 0.25)")
    parser.add_argument("--cs-threshold", type=float, default=None,
                        help="CS preemption threshold (default 2.0); <=1 disables")
    parser.add_argument("--restore-penalty", type=float, default=None,
                        help="restore penalty after preemption, sim-seconds (default 5)")
    parser.add_argument("--no-contention", action="store_true",
                        help="force CS = 1 everywhere")
    parser.add_argument("--contention-mode", choices=("table", "synthetic"), default=None,
                        help="CS mode (default: calibrated table)")
    parser.add_argument("--cs-table", default=None, help="path to a CS table file")


def _cluster_config(args, file_cfg) -> ClusterConfig:
    defaults = {"nodes": 4, "gpus_per_node": 8, "inter_bw": 1250.0, "intra_bw": 16000.0}
    cli = {"nodes": args.nodes, "gpus_per_node": args.gpus_per_node,
           "inter_bw": args.inter_bw, "intra_bw": args.intra_bw}
    merged = merge_config({k: v for k, v in file_cfg.items() if k in defaults}, cli, defaults)
    return ClusterConfig(num_nodes=merged["nodes"], gpus_per_node=merged["gpus_per_node"],
                         inter_node_bandwidth=merged["inter_bw"],
                         intra_node_bandwidth=merged["intra_bw"])


def _episode_config(args, cluster_config) -> EpisodeConfig:
    threshold = 2.0 if args.cs_threshold is None else args.cs_threshold
    if threshold <= 1.0:
        threshold = None
    if args.cs_table:
        contention = ContentionParams(mode="table", table=load_cs_table(args.cs_table))
    elif args.contention_mode == "synthetic":
        contention = ContentionParams(mode="synthetic")
    else:
        contention = default_contention_params()
    return EpisodeConfig(
        round_interval=0.25 if args.round_interval is None else args.round_interval,
        cs_preemption_threshold=threshold,
        restore_penalty=5.0 if args.restore_penalty is None else args.restore_penalty,
        contention=contention,
        contention_enabled=not args.no_contention)


def _weights(args) -> RewardWeights:
    if args.branch is not None:
        branch = args.branch.upper()
        if branch not in BRANCHES:
            raise UsageError(f"unknown branch {args.branch!r}; valid: A B C D E")
        return BRANCHES[branch]
    if args.w1 is not None:
        if not 0.0 <= args.w1 <= 1.0:
            raise UsageError(f"--w1 must be in [0, 1], got {args.w1}")
        if args.w2 is not None and abs(args.w1 + args.w2 - 1.0) > 1e-12:
            raise UsageError(f"w1 + w2 must equal 1, got {args.w1} + {args.w2}")
        return RewardWeights(args.w1)
    return RewardWeights()


def _provenance(args, extra: dict | None = None) -> dict:
    skip = {"func", "config"}
    fields = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    fields["version"] = __version__
    fields.update(extra or {})
    return fields


def _load_traces(paths) -> list:
    traces = []
    for path in paths:
        if not os.path.exists(path):
            raise TraceParseError(f"trace file {path} does not exist")
        jobs, _ = read_trace(path)
        traces.append(jobs)
    return traces


def _experiment_id(kind: str, names: str, trace_paths, seed) -> str:
    stems = "+".join(os.path.splitext(os.path.basename(p))[0] for p in trace_paths[:3])
    if len(trace_paths) > 3:
        stems += f"+{len(trace_paths) - 3}more"
    return f"{kind}_{names}_{stems}_s{seed}"


def _policy_for(kind: str, args, cluster_config, deterministic=True):
    if kind in ("rl-base", "rl-hybrid"):
        if not args.checkpoint:
            raise UsageError(f"policy {kind} requires --checkpoint")
        net, _meta = load_checkpoint(args.checkpoint)
        space = ActionSpace(cluster_config)
        expected, _ = make_net(cluster_config, TrainConfig(k=net.arch.k, hidden=tuple(net.arch.hidden)))
        ensure_compatible(net.arch, expected.arch, path=args.checkpoint)
        return make_policy(kind, net=net, action_space=space, deterministic=deterministic)
    return make_policy(kind)


def cmd_gen_trace(args) -> int:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    try:
        mix = parse_mix(args.mix)
    except (ConfigError, ValueError) as exc:
        raise UsageError(f"bad --mix: {exc}; presets: {', '.join(MIX_PRESETS)}") from exc
    file_cfg = parse_config_file(args.config) if args.config else {}
    cluster = _cluster_config(args, file_cfg)
    spec = TraceSpec(num_jobs=args.jobs, mix=mix, seed=args.seed,
                     isolated_hours=args.isolated_hours, time_scale=args.time_scale,
                     jitter=args.jitter, demand_cap=args.demand_cap,
                     demand_profile=args.demand_profile,
                     arrival=args.arrival, arrival_rate=args.arrival_rate)
    jobs = generate_trace(spec, cluster)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    write_trace(jobs, spec, args.out)
    print(f"wrote {len(jobs)} jobs to {args.out}")
    return 0


def cmd_train(args) -> int:
    file_cfg = parse_config_file(args.config) if args.config else {}
    cluster = _cluster_config(args, file_cfg)
    episode = _episode_config(args, cluster)
    weights = _weights(args)
    traces = _load_traces([args.trace])
    root = output_root(args.out_dir)
    ckpt_dir = os.path.join(root, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    name = args.name or f"policy_w1-{weights.w1!r}_s{args.seed}"
    ckpt_path = os.path.join(ckpt_dir, name + ".ckpt")
    config = TrainConfig(
        episodes=args.episodes, checkpoint_path=ckpt_path, lr=args.lr,
        gamma=args.gamma, entropy_coef=args.entropy_coef, seed=args.seed,
        k=args.k, weights=weights, episode=episode,
        shuffle_per_episode=not args.no_shuffle)
    trace_id = os.path.basename(args.trace)
    net, curves = train(traces[0], config, cluster, metadata={"trace": trace_id})
    curves_path = os.path.join(ckpt_dir, name + "_curves.csv")
    write_training_curves(curves_path, curves, _provenance(args, {"checkpoint": ckpt_path}))
    print(f"saved checkpoint {ckpt_path}")
    print(f"wrote training curves {curves_path}")
    return 0


def cmd_eval(args) -> int:
    if args.policy not in POLICY_KINDS:
        raise UsageError(f"unknown policy {args.policy!r}; valid: {', '.join(POLICY_KINDS)}")
    file_cfg = parse_config_file(args.config) if args.config else {}
    cluster = _cluster_config(args, file_cfg)
    episode = _episode_config(args, cluster)
    weights = _weights(args)
    traces = _load_traces(args.trace)
    policy = _policy_for(args.policy, args, cluster)
    root = output_root(args.out_dir)
    exp_id = args.name or _experiment_id("eval", args.policy, args.trace, args.seed)
    out_dir = os.path.join(root, "reports", exp_id)
    os.makedirs(out_dir, exist_ok=True)
    provenance = _provenance(args, {"experiment": exp_id})
    pooled = {}
    for k, trace in enumerate(traces):
        rng = np.random.default_rng([args.seed, k])
        report = run_episode(policy, trace, episode, cluster, weights=weights, rng=rng)
        if args.dump_state_rounds:
            _dump_states(policy, trace, episode, cluster, weights, out_dir, k,
                         args.dump_state_rounds)
        write_episode_report(report, os.path.join(out_dir, f"set{k:02d}"), provenance)
        for key, value in report.aggregates.items():
            pooled.setdefault(key, []).append(value)
    summary = {f"mean_{k}": sum(v) / len(v) for k, v in pooled.items()}
    summary["num_sets"] = len(traces)
    write_summary(os.path.join(out_dir, "summary.txt"), summary, provenance)
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(provenance, sort_keys=True, indent=1, default=str) + "\n")
    print(f"wrote reports under {out_dir}")
    return 0


def _dump_states(policy, trace, episode, cluster_config, weights, out_dir, set_idx, rounds):
    """Debug: re-run the first rounds, dumping each observation tensor."""
    from .cluster import ClusterState
    from .workload import JobState

    k = getattr(policy, "k", 3)
    cluster = ClusterState(cluster_config)
    states = {spec.id: JobState(spec=spec) for spec in trace}
    queue = [spec for spec in trace if spec.arrival_time <= 0.0]
    for r in range(rounds):
        candidates = select_candidates(queue, k)
        tensor = encode_state(cluster, candidates, states)
        dump_state_csv(tensor, os.path.join(out_dir, f"state_set{set_idx:02d}_round{r}.csv"))
        action = policy.decide(cluster, [s for s in queue], states, np.random.default_rng(0))
        for jid, placement in action.placements:
            cluster.allocate(jid, placement)
            queue = [s for s in queue if s.id != jid]


def cmd_compare(args) -> int:
    names = [p.strip() for p in args.policies.split(",") if p.strip()]
    if len(names) < 2:
        raise UsageError("--policies needs at least two comma-separated policy names")
    for name in names:
        if name not in POLICY_KINDS:
            raise UsageError(f"unknown policy {name!r}; valid: {', '.join(POLICY_KINDS)}")
    file_cfg = parse_config_file(args.config) if args.config else {}
    cluster = _cluster_config(args, file_cfg)
    episode = _episode_config(args, cluster)
    weights = _weights(args)
    traces = _load_traces(args.trace)
    policies = [(name, _policy_for(name, args, cluster)) for name in names]
    cmp = compare_policies(policies, traces, episode, cluster, weights)
    root = output_root(args.out_dir)
    exp_id = args.name or _experiment_id("compare", "+".join(names), args.trace, args.seed)
    out_dir = os.path.join(root, "reports", exp_id)
    provenance = _provenance(args, {"experiment": exp_id})
    write_comparison(cmp, out_dir, provenance)
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(provenance, sort_keys=True, indent=1, default=str) + "\n")
    for (a, b), deltas in sorted(cmp.deltas.items()):
        print(f"{a} vs {b}: " + " ".join(f"{m} {d:+.1f}%" for m, d in deltas.items()))
    print(f"wrote comparison under {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consched",
        description="Contention-aware GPU cluster scheduling simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-trace", help="generate a job trace file")
    p.add_argument("--mix", default="normal",
                   help="preset (normal, heavy, medium, low) or 6 ratios a:b:c:d:e:f")
    p.add_argument("--jobs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--isolated-hours", type=float, default=1.0)
    p.add_argument("--time-scale", type=float, default=1.0 / 60.0)
    p.add_argument("--jitter", type=float, default=0.2)
    p.add_argument("--demand-cap", type=int, default=32)
    p.add_argument("--demand-profile", choices=("small-skew", "uniform"), default="small-skew")
    p.add_argument("--arrival", choices=("all-at-zero", "poisson"), default="all-at-zero")
    p.add_argument("--arrival-rate", type=float, default=1.0)
    p.add_argument("--config", default=None)
    _add_cluster_flags(p)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("train", help="train an RL scheduling policy")
    p.add_argument("--trace", required=True)
    p.add_argument("--branch", default=None, help="reward preset A..E")
    p.add_argument("--w1", type=float, default=None)
    p.add_argument("--w2", type=float, default=None)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--entropy-coef", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--no-shuffle", action="store_true",
                   help="keep the trace arrival order fixed across episodes")
    p.add_argument("--name", default=None, help="checkpoint name stem")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--config", default=None)
    _add_cluster_flags(p)
    _add_episode_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one policy on trace sets")
    p.add_argument("--policy", required=True)
    p.add_argument("--trace", action="append", required=True,
                   help="trace file; repeat for multiple job sets")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--branch", default=None)
    p.add_argument("--w1", type=float, default=None)
    p.add_argument("--w2", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--dump-state-rounds", type=int, default=0,
                   help="dump the first N observation tensors per set as CSV grids")
    p.add_argument("--config", default=None)
    _add_cluster_flags(p)
    _add_episode_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="compare policies over shared traces")
    p.add_argument("--policies", required=True, help="comma-separated policy names")
    p.add_argument("--trace", action="append", required=True)
    p.add_argument("--checkpoint", default=None, help="checkpoint for RL policies")
    p.add_argument("--branch", default=None)
    p.add_argument("--w1", type=float, default=None)
    p.add_argument("--w2", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--config", default=None)
    _add_cluster_flags(p)
    _add_episode_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceParseError, FileNotFoundError, CheckpointError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except (ConschedError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
