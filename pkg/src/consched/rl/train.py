"""Policy-gradient training over simulated episodes.

One update per episode: discounted per-round returns, a learned value
baseline, entropy regularization, advantage normalization, Adam with
global-norm clipping. Rounds where the livelock guard overrode the
policy contribute rewards to the returns but no policy-gradient or
entropy terms (the applied action was not the policy's sample).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..actions import ActionSpace, RLDecision
from ..cluster import ClusterConfig
from ..encoding import FEATURE_DIM, FeatureConfig
from ..engine import EpisodeConfig, run_episode
from ..errors import NonFiniteLossError
from ..policies import RLBasePolicy
from ..workload import JobSpec, shuffle_arrival_order
from .net import Architecture, PolicyNet, entropy_of, masked_log_softmax
from .optim import Adam, clip_grad_norm
from .reward import RewardWeights
from .checkpoint import save_checkpoint


@dataclass
class TrainConfig:
    episodes: int = 20
    checkpoint_path: str = "policy.ckpt"
    lr: float = 0.01
    gamma: float = 0.5
    entropy_coef: float = 0.01
    value_coef: float = 0.0  # baseline is fit in its own phase (value_epochs)
    max_grad_norm: float = 10.0
    updates_per_episode: int = 4  # gradient steps on each episode's surrogate
    value_epochs: int = 30  # value-net regression steps before advantages
    value_lr: float = 0.01
    normalize_advantages: bool = True
    shuffle_per_episode: bool = True
    seed: int = 0
    k: int = 3
    hidden: tuple[int, int] = (256, 256)
    weights: RewardWeights = field(default_factory=RewardWeights)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)


@dataclass
class Batch:
    """Fixed inputs to the per-update objective (advantages precomputed)."""

    states: np.ndarray  # (B, input_dim)
    actions: np.ndarray  # (B, K)
    masks: np.ndarray  # (B, K, A)
    advantages: np.ndarray  # (B,)
    returns: np.ndarray  # (B,)
    policy_weight: np.ndarray  # (B,) 1.0 normally, 0.0 for forced rounds


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.zeros_like(rewards)
    acc = 0.0
    for k in range(len(rewards) - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        out[k] = acc
    return out


def value_step(net: PolicyNet, states: np.ndarray, returns: np.ndarray,
               opt: Adam) -> float:
    """One regression step of the value baseline toward the returns."""
    p = net.params
    v1 = np.tanh(states @ p["vw1"] + p["vb1"])
    v2 = np.tanh(v1 @ p["vw2"] + p["vb2"])
    values = (v2 @ p["vw3"] + p["vb3"]).ravel()
    err = values - returns
    loss = 0.5 * float((err * err).mean())
    dv = err[:, None] / states.shape[0]
    grads = {"vw3": v2.T @ dv, "vb3": np.array([dv.sum()])}
    dv2 = (dv @ p["vw3"].T) * (1.0 - v2 * v2)
    grads["vw2"] = v1.T @ dv2
    grads["vb2"] = dv2.sum(axis=0)
    dv1 = (dv2 @ p["vw2"].T) * (1.0 - v1 * v1)
    grads["vw1"] = states.T @ dv1
    grads["vb1"] = dv1.sum(axis=0)
    opt.step(grads)
    return loss


def excess_returns(trajectory, gamma: float) -> np.ndarray:
    """Discounted returns of the excess-over-noop reward stream.

    Subtracting the counterfactual no-op reward (a state-only quantity
    the engine computes exactly) cancels the standing reward level set
    by earlier placements, leaving credit that tracks the actions'
    marginal effects. Being action-independent, it keeps the gradient
    estimator unbiased, like any baseline.
    """
    excess = np.array([r - noop for _, r, noop in trajectory])
    return discounted_returns(excess, gamma)


def build_batch(net: PolicyNet, trajectory: list[tuple[RLDecision, float, float]],
                gamma: float, normalize: bool) -> Batch:
    states = np.stack([step.state for step, *_ in trajectory])
    actions = np.stack([step.head_actions for step, *_ in trajectory])
    masks = np.stack([step.masks for step, *_ in trajectory])
    weight = np.array([0.0 if step.forced else 1.0 for step, *_ in trajectory])
    returns = excess_returns(trajectory, gamma)
    values = net.values(states)
    advantages = returns - values
    if normalize:
        used = advantages[weight > 0]
        if used.size > 1:
            std = used.std()
            advantages = (advantages - used.mean()) / (std if std > 1e-8 else 1.0)
    return Batch(states=states, actions=actions, masks=masks,
                 advantages=advantages, returns=returns, policy_weight=weight)


def loss_and_grads(net: PolicyNet, batch: Batch,
                   entropy_coef: float, value_coef: float):
    """Surrogate objective and its exact gradient.

    loss = -E[adv * sum_k log pi_k(a_k)] + value_coef * 0.5 * E[(V - G)^2]
           - entropy_coef * E[sum_k H(pi_k)]
    with the first and last expectations over policy-weighted rounds.
    Advantages and returns are constants here, so a finite-difference
    probe of this function checks the backward pass end to end.
    """
    p = net.params
    x = batch.states
    h1 = np.tanh(x @ p["w1"] + p["b1"])
    h2 = np.tanh(h1 @ p["w2"] + p["b2"])
    bsz = x.shape[0]
    k, a = net.arch.k, net.arch.head_size
    logits = (h2 @ p["wh"] + p["bh"]).reshape(bsz, k, a) + p["head_prior"][None, None, :]
    v1 = np.tanh(x @ p["vw1"] + p["vb1"])
    v2 = np.tanh(v1 @ p["vw2"] + p["vb2"])
    values = (v2 @ p["vw3"] + p["vb3"]).ravel()

    probs, logp = masked_log_softmax(logits, batch.masks)
    idx_b = np.arange(bsz)[:, None]
    idx_k = np.arange(k)[None, :]
    chosen_logp = logp[idx_b, idx_k, batch.actions]  # (B, K)
    pw = batch.policy_weight
    n_pg = max(1.0, float(pw.sum()))
    pg_loss = -float((pw * batch.advantages * chosen_logp.sum(axis=1)).sum()) / n_pg

    ent_heads = entropy_of(probs)  # (B, K)
    entropy = float((pw * ent_heads.sum(axis=1)).sum()) / n_pg

    v_err = values - batch.returns
    value_loss = 0.5 * float((v_err * v_err).mean())

    loss = pg_loss + value_coef * value_loss - entropy_coef * entropy

    # d loss / d logits
    onehot = np.zeros_like(probs)
    onehot[idx_b, idx_k, batch.actions] = 1.0
    coeff = (-(pw * batch.advantages) / n_pg)[:, None, None]
    dlogits = coeff * (onehot - probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(probs > 0, probs * np.log(probs), 0.0)
    # dH/dlogit_j = -p_j (log p_j + H); loss has -entropy_coef * H
    dlogits += (entropy_coef / n_pg) * pw[:, None, None] * (
        plogp + probs * ent_heads[:, :, None])
    dvalues = (value_coef / bsz) * v_err

    dflat = dlogits.reshape(bsz, k * a)
    grads = {
        "wh": h2.T @ dflat,
        "bh": dflat.sum(axis=0),
    }
    dh2 = dflat @ p["wh"].T
    dz2 = dh2 * (1.0 - h2 * h2)
    grads["w2"] = h1.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    dh1 = dz2 @ p["w2"].T
    dz1 = dh1 * (1.0 - h1 * h1)
    grads["w1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)

    # value-baseline gradients stay inside the value MLP
    grads["vw3"] = v2.T @ dvalues[:, None]
    grads["vb3"] = np.array([dvalues.sum()])
    dv2 = (dvalues[:, None] @ p["vw3"].T) * (1.0 - v2 * v2)
    grads["vw2"] = v1.T @ dv2
    grads["vb2"] = dv2.sum(axis=0)
    dv1 = (dv2 @ p["vw2"].T) * (1.0 - v1 * v1)
    grads["vw1"] = x.T @ dv1
    grads["vb1"] = dv1.sum(axis=0)

    aux = {"loss": loss, "pg_loss": pg_loss, "value_loss": value_loss,
           "entropy": entropy}
    return loss, grads, aux


def update(net: PolicyNet, trajectory: list[tuple[RLDecision, float, float]],
           config: TrainConfig, opt: Adam, batch: Batch | None = None) -> dict:
    """One gradient step from one episode's trajectory."""
    if not trajectory:
        raise NonFiniteLossError("empty trajectory", {"steps": 0})
    if batch is None:
        batch = build_batch(net, trajectory, config.gamma, config.normalize_advantages)
    loss, grads, aux = loss_and_grads(net, batch, config.entropy_coef, config.value_coef)
    finite = np.isfinite(loss) and all(np.isfinite(g).all() for g in grads.values())
    if not finite:
        rewards = np.array([r for _, r, _ in trajectory])
        bad = int(np.argmax(~np.isfinite(batch.advantages))) if not np.isfinite(
            batch.advantages).all() else -1
        raise NonFiniteLossError(
            "non-finite loss or gradient", {
                "loss": float(loss) if np.isfinite(loss) else repr(loss),
                "pg_loss": aux["pg_loss"], "value_loss": aux["value_loss"],
                "entropy": aux["entropy"], "steps": len(trajectory),
                "first_bad_step": bad,
                "reward_min": float(rewards.min()), "reward_max": float(rewards.max()),
            })
    aux["grad_norm"] = clip_grad_norm(grads, config.max_grad_norm)
    opt.step(grads)
    return aux


def pack_first_prior(space: ActionSpace, width_penalty: float = 0.5,
                     rank_penalty: float = 0.02, skip_logit: float = -1.0) -> np.ndarray:
    """Initial head biases replicating greedy first-fit preferences.

    Fewer nodes beats more nodes, lexicographically earlier subsets beat
    later ones, and skip sits below every placement, so an untrained
    argmax places like the greedy baseline while sampling still explores.
    """
    prior = np.zeros(space.size)
    rank = 0
    last_width = None
    for idx, (i, _) in enumerate(space.subsets):
        if i != last_width:
            rank, last_width = 0, i
        prior[idx] = -width_penalty * i - rank_penalty * rank
        rank += 1
    prior[space.skip_index] = skip_logit
    return prior


def make_net(cluster_config: ClusterConfig, config: TrainConfig) -> tuple[PolicyNet, ActionSpace]:
    space = ActionSpace(cluster_config)
    input_dim = cluster_config.num_nodes * 2 * cluster_config.gpus_per_node * FEATURE_DIM
    arch = Architecture(input_dim=input_dim, hidden=tuple(config.hidden),
                        k=config.k, head_size=space.size)
    net = PolicyNet(arch, np.random.default_rng(config.seed),
                    head_prior=pack_first_prior(space))
    return net, space


def train(trace: list[JobSpec], config: TrainConfig,
          cluster_config: ClusterConfig | None = None,
          metadata: dict | None = None,
          feature_cfg: FeatureConfig | None = None):
    """Run the training loop and save the final checkpoint.

    Returns (net, curves); curves has one row per episode with the mean
    reward / CS / utilization plus the update diagnostics.
    """
    cluster_config = cluster_config or ClusterConfig()
    net, space = make_net(cluster_config, config)
    opt = Adam(net.params, lr=config.lr)
    value_opt = Adam(net.params, lr=config.value_lr)
    policy = RLBasePolicy(net, space, feature_cfg, deterministic=False)
    curves = []
    for episode in range(config.episodes):
        ep_rng = np.random.default_rng([config.seed, episode])
        ep_trace = trace
        if config.shuffle_per_episode:
            ep_trace = shuffle_arrival_order(trace, ep_rng)
        report = run_episode(policy, ep_trace, config.episode, cluster_config,
                             weights=config.weights, rng=ep_rng,
                             record_trajectory=True)
        states = np.stack([step.state for step, *_ in report.trajectory])
        returns = excess_returns(report.trajectory, config.gamma)
        for _ in range(config.value_epochs):
            value_loss = value_step(net, states, returns, value_opt)
        batch = build_batch(net, report.trajectory, config.gamma,
                            config.normalize_advantages)
        for _ in range(max(1, config.updates_per_episode)):
            aux = update(net, report.trajectory, config, opt, batch=batch)
        curves.append({
            "episode": episode,
            "mean_reward": report.aggregates["mean_reward"],
            "mean_cs": report.aggregates["mean_cs"],
            "mean_util": report.aggregates["mean_util"],
            "avg_jct": report.aggregates["avg_jct"],
            "rounds": report.aggregates["num_rounds"],
            "loss": aux["loss"], "entropy": aux["entropy"],
            "grad_norm": aux["grad_norm"],
        })
    meta = {"seed": config.seed, "w1": config.weights.w1, "episodes": config.episodes,
            "lr": config.lr, "gamma": config.gamma, "k": config.k}
    meta.update(metadata or {})
    save_checkpoint(net, config.checkpoint_path, metadata=meta)
    return net, curves
