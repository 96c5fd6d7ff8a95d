"""Proximal policy optimization for the gate-control environment.

Continuous five-channel actions come from a Gaussian head in pre-squash
space: the policy MLP outputs a mean, a learned state-independent log-std
fixes the spread, samples are squashed through a logistic sigmoid into
[0, 1], and log-probabilities carry the squash correction.  A separate MLP
estimates the state value.  Updates use the clipped importance-ratio
surrogate with generalized advantage estimation.

Two robustness mechanisms can be enabled during training: multiplicative
Gaussian perturbation of the Rabi/detuning action channels before they
reach the environment, or inverted dropout on the policy's hidden layers.
Dropout masks drawn during a rollout are stored with the trajectory and
reused in the update passes, so the importance ratios of a fresh batch are
exactly one and the gradients flow through the same thinned network that
produced the actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import EnvConfig, GateControlEnv
from .nets import Adam, Mlp, draw_dropout_masks, init_mlp

LOG_2PI = math.log(2.0 * math.pi)
VALUE_LOSS_COEF = 0.5


class NonFiniteLossError(RuntimeError):
    """Raised when a PPO update produces a non-finite loss."""


@dataclass
class RegularizerSpec:
    """Robustness mechanism: none, output perturbation, or dropout."""

    kind: str = "none"
    sigma: float = 0.1
    rate: float = 0.1

    def validate(self) -> "RegularizerSpec":
        if self.kind not in ("none", "output_perturbation", "dropout"):
            raise ValueError(
                f"regularizer kind must be 'none', 'output_perturbation' or "
                f"'dropout', got {self.kind!r}"
            )
        if self.sigma < 0:
            raise ValueError(f"perturbation sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {self.rate}")
        return self


@dataclass
class PpoConfig:
    """Training hyperparameters; ``batch_size`` counts episodes per update."""

    batch_size: int = 64
    learning_rate: float = 1e-4
    clip_ratio: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    update_epochs: int = 10
    minibatch_size: int = 256
    max_episodes: int = 100_000
    seed: int = 0
    stop_on_threshold: bool = True
    eval_stop_fidelity: float | None = None
    hidden_sizes: tuple[int, ...] = (64, 64)
    log_std_init: float = 0.5
    entropy_coef: float = 0.003

    def validate(self) -> "PpoConfig":
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError(f"clip_ratio must lie in (0, 1), got {self.clip_ratio}")
        for name in ("discount", "gae_lambda"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.update_epochs < 1:
            raise ValueError(f"update_epochs must be >= 1, got {self.update_epochs}")
        if self.minibatch_size < 1:
            raise ValueError(f"minibatch_size must be >= 1, got {self.minibatch_size}")
        if self.max_episodes < 0:
            raise ValueError(f"max_episodes must be >= 0, got {self.max_episodes}")
        return self


@dataclass
class PolicyParams:
    """Policy network, value network and the Gaussian head's log-std."""

    policy: Mlp
    value: Mlp
    log_std: np.ndarray

    def parameter_list(self) -> list[np.ndarray]:
        return self.policy.parameters() + [self.log_std] + self.value.parameters()

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.policy.copy(), self.value.copy(), self.log_std.copy())

    def equals(self, other: "PolicyParams") -> bool:
        mine, theirs = self.parameter_list(), other.parameter_list()
        return all(np.array_equal(a, b) for a, b in zip(mine, theirs))


def init_policy(rng: np.random.Generator, obs_dim: int = 38, act_dim: int = 5,
                hidden: tuple[int, ...] = (64, 64),
                log_std_init: float = 0.0) -> PolicyParams:
    """Fresh parameters; the policy output layer starts small so the initial
    squashed mean sits near mid-range controls."""
    policy = init_mlp((obs_dim, *hidden, act_dim), rng, final_scale=0.01)
    value = init_mlp((obs_dim, *hidden, 1), rng)
    log_std = np.full(act_dim, float(log_std_init))
    return PolicyParams(policy, value, log_std)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def squashed_log_prob(presquash: np.ndarray, mean: np.ndarray,
                      log_std: np.ndarray) -> np.ndarray:
    """Log-density of the squashed action given pre-squash mean and log-std.

    Gaussian log-density of the pre-squash sample plus the change-of-variable
    term ``-log a(1-a)`` of the logistic squash.
    """
    std = np.exp(log_std)
    diff = (presquash - mean) / std
    gauss = -0.5 * (diff * diff) - log_std - 0.5 * LOG_2PI
    squash = _softplus(presquash) + _softplus(-presquash)
    return np.sum(gauss + squash, axis=-1)


def policy_forward(obs: np.ndarray, p: PolicyParams, reg: RegularizerSpec,
                   mode: str = "eval", rng: np.random.Generator | None = None,
                   masks: list[np.ndarray] | None = None):
    """Squashed action mean, per-channel std and value estimate.

    Deterministic in eval mode.  In train mode with a dropout regularizer
    the policy's hidden activations are masked (masks drawn from ``rng``
    unless supplied); the value network is never dropped.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != p.policy.sizes[0]:
        raise ValueError(
            f"observation size {obs.shape[-1]} does not match the policy "
            f"input size {p.policy.sizes[0]}"
        )
    rate = 0.0
    if reg.kind == "dropout" and mode == "train" and reg.rate > 0.0:
        rate = reg.rate
        if masks is None:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng or explicit masks")
            batch = None if obs.ndim == 1 else obs.shape[0]
            masks = draw_dropout_masks(p.policy, rate, rng, batch)
    else:
        masks = None
    mean_pre, _ = p.policy.forward(obs, masks, rate)
    value, _ = p.value.forward(obs)
    return sigmoid(mean_pre), np.exp(p.log_std), value[..., 0]


@dataclass
class ActionSample:
    action: np.ndarray
    presquash: np.ndarray
    log_prob: float
    value: float
    masks: list[np.ndarray] | None


def sample_action(obs: np.ndarray, p: PolicyParams, reg: RegularizerSpec,
                  rng: np.random.Generator, mode: str = "train") -> ActionSample:
    """Draw a squashed Gaussian action; eval mode returns the mean."""
    rate = 0.0
    masks = None
    if reg.kind == "dropout" and mode == "train" and reg.rate > 0.0:
        rate = reg.rate
        masks = draw_dropout_masks(p.policy, rate, rng)
    mean_pre, _ = p.policy.forward(obs, masks, rate)
    value, _ = p.value.forward(obs)
    if mode == "eval":
        presquash = mean_pre
    else:
        presquash = mean_pre + np.exp(p.log_std) * rng.standard_normal(mean_pre.shape)
    action = sigmoid(presquash)
    logp = float(squashed_log_prob(presquash, mean_pre, p.log_std))
    return ActionSample(action, presquash, logp, float(value[0]), masks)


def perturb_action(action: np.ndarray, sigma: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Multiplicative Gaussian noise on the Rabi and detuning channels.

    Channels 0-3 are scaled by independent ``1 + N(0, sigma)`` draws and
    clamped back to [0, 1]; the exchange channel is never perturbed.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    a = np.array(action, dtype=float)
    if sigma == 0.0:
        return a
    a[:4] = np.clip(a[:4] * (1.0 + sigma * rng.standard_normal(4)), 0.0, 1.0)
    return a


# ---------------------------------------------------------------------------
# Trajectories and advantage estimation
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """One episode of experience."""

    obs: np.ndarray
    presquash: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    masks: list[np.ndarray] | None
    final_fidelity: float

    def __len__(self) -> int:
        return len(self.rewards)


def gae_from_arrays(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                    discount: float, gae_lambda: float):
    """Backward-recursion GAE; a done step bootstraps a terminal value of 0."""
    n = len(rewards)
    if not (len(values) == len(dones) == n):
        raise ValueError(
            f"length mismatch: rewards {n}, values {len(values)}, dones {len(dones)}"
        )
    advantages = np.zeros(n)
    running = 0.0
    next_value = 0.0
    for t in reversed(range(n)):
        cont = 0.0 if dones[t] else 1.0
        delta = rewards[t] + discount * next_value * cont - values[t]
        running = delta + discount * gae_lambda * cont * running
        advantages[t] = running
        next_value = values[t]
    return advantages, advantages + values


def compute_gae(traj: Trajectory, discount: float, gae_lambda: float):
    """Advantages and returns for one trajectory."""
    return gae_from_arrays(traj.rewards, traj.values, traj.dones,
                           discount, gae_lambda)


# ---------------------------------------------------------------------------
# Loss and update
# ---------------------------------------------------------------------------

def ppo_loss_and_grads(params: PolicyParams, batch: dict, clip_ratio: float,
                       drop_rate: float = 0.0, entropy_coef: float = 0.0):
    """Full PPO loss (clipped surrogate + value MSE) and its gradients.

    ``batch`` needs ``obs``, ``presquash``, ``log_probs``, ``advantages``,
    ``returns`` and optionally ``masks`` (per-layer arrays matching the
    batch).  An optional entropy bonus on the pre-squash Gaussian keeps the
    exploration spread from collapsing.  Returns ``(loss, grads, stats)``
    with ``grads`` ordered like ``params.parameter_list()``.
    """
    obs = batch["obs"]
    presquash = batch["presquash"]
    logp_old = batch["log_probs"]
    adv = batch["advantages"]
    ret = batch["returns"]
    masks = batch.get("masks")
    n = obs.shape[0]

    mean_pre, cache_p = params.policy.forward(obs, masks, drop_rate)
    std = np.exp(params.log_std)
    diff = presquash - mean_pre
    scaled = diff / std
    logp = squashed_log_prob(presquash, mean_pre, params.log_std)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    surr_plain = ratio * adv
    surr_clip = clipped * adv
    take_plain = surr_plain <= surr_clip
    policy_loss = -float(np.mean(np.where(take_plain, surr_plain, surr_clip)))

    value_out, cache_v = params.value.forward(obs)
    value = value_out[:, 0]
    verr = value - ret
    value_loss = float(np.mean(verr * verr))
    # pre-squash Gaussian entropy depends on the log-std alone
    entropy = float(np.sum(params.log_std + 0.5 * (1.0 + LOG_2PI)))
    loss = policy_loss + VALUE_LOSS_COEF * value_loss - entropy_coef * entropy

    # d(policy loss)/d(logp): only the un-clipped branch propagates gradient
    dlogp = np.where(take_plain, -adv * ratio / n, 0.0)
    dmean = dlogp[:, None] * (scaled / std)
    grad_log_std = np.sum(dlogp[:, None] * (scaled * scaled - 1.0), axis=0)
    grad_log_std -= entropy_coef
    gw_p, gb_p = params.policy.backward(cache_p, dmean)

    dvalue = (2.0 * VALUE_LOSS_COEF / n) * verr
    gw_v, gb_v = params.value.backward(cache_v, dvalue[:, None])

    grads: list[np.ndarray] = []
    for w, b in zip(gw_p, gb_p):
        grads.extend([w, b])
    grads.append(grad_log_std)
    for w, b in zip(gw_v, gb_v):
        grads.extend([w, b])

    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "ratio_mean": float(np.mean(ratio)),
        "ratio_max": float(np.max(ratio)),
        "clip_fraction": float(np.mean(~take_plain)),
    }
    return loss, grads, stats


def _stack_batch(trajs: list[Trajectory], discount: float, gae_lambda: float):
    """Concatenate trajectories and normalize advantages across the batch."""
    obs = np.concatenate([t.obs for t in trajs])
    presquash = np.concatenate([t.presquash for t in trajs])
    logp = np.concatenate([t.log_probs for t in trajs])
    adv_parts, ret_parts = [], []
    for t in trajs:
        a, r = compute_gae(t, discount, gae_lambda)
        adv_parts.append(a)
        ret_parts.append(r)
    adv = np.concatenate(adv_parts)
    ret = np.concatenate(ret_parts)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    masks = None
    if trajs[0].masks is not None:
        n_layers = len(trajs[0].masks)
        masks = [np.concatenate([t.masks[k] for t in trajs]) for k in range(n_layers)]
    return {"obs": obs, "presquash": presquash, "log_probs": logp,
            "advantages": adv, "returns": ret, "masks": masks}


def ppo_update(trajs: list[Trajectory], params: PolicyParams, cfg: PpoConfig,
               reg: RegularizerSpec, adam: Adam,
               rng: np.random.Generator) -> PolicyParams:
    """Run the configured epochs of minibatch updates over one batch.

    Raises:
        NonFiniteLossError: with the loss breakdown, leaving the parameters
            at their last finite state.
    """
    if not trajs:
        raise ValueError("ppo_update needs a non-empty batch")
    data = _stack_batch(trajs, cfg.discount, cfg.gae_lambda)
    drop_rate = reg.rate if reg.kind == "dropout" else 0.0
    n = data["obs"].shape[0]
    plist = params.parameter_list()
    for _ in range(cfg.update_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start:start + cfg.minibatch_size]
            batch = {
                "obs": data["obs"][idx],
                "presquash": data["presquash"][idx],
                "log_probs": data["log_probs"][idx],
                "advantages": data["advantages"][idx],
                "returns": data["returns"][idx],
                "masks": None if data["masks"] is None
                         else [m[idx] for m in data["masks"]],
            }
            loss, grads, stats = ppo_loss_and_grads(
                params, batch, cfg.clip_ratio, drop_rate, cfg.entropy_coef)
            if not math.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite PPO loss: policy {stats['policy_loss']}, "
                    f"value {stats['value_loss']}, ratio_max {stats['ratio_max']}"
                )
            adam.step(plist, grads)
    return params


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    total_reward: float
    final_fidelity: float


@dataclass
class EvalRecord:
    episodes_done: int
    fidelity: float


@dataclass
class TrainingLog:
    episodes: list[EpisodeRecord] = field(default_factory=list)
    evals: list[EvalRecord] = field(default_factory=list)

    def best_eval(self) -> float:
        return max((e.fidelity for e in self.evals), default=0.0)


def rollout_episode(env: GateControlEnv, params: PolicyParams,
                    reg: RegularizerSpec, rng: np.random.Generator) -> Trajectory:
    """Collect one training episode."""
    obs = env.reset()
    obs_list, z_list, logp_list, rew_list, val_list, done_list = [], [], [], [], [], []
    mask_steps: list[list[np.ndarray]] = []
    done = False
    fid = 0.0
    while not done:
        sample = sample_action(obs, params, reg, rng, mode="train")
        applied = sample.action
        if reg.kind == "output_perturbation":
            applied = perturb_action(sample.action, reg.sigma, rng)
        next_obs, reward, done, info = env.step(applied)
        obs_list.append(obs)
        z_list.append(sample.presquash)
        logp_list.append(sample.log_prob)
        rew_list.append(reward)
        val_list.append(sample.value)
        done_list.append(done)
        if sample.masks is not None:
            mask_steps.append(sample.masks)
        obs = next_obs
        fid = info["fidelity"]
    masks = None
    if mask_steps:
        n_layers = len(mask_steps[0])
        masks = [np.stack([step[k] for step in mask_steps]) for k in range(n_layers)]
    return Trajectory(
        obs=np.array(obs_list),
        presquash=np.array(z_list),
        log_probs=np.array(logp_list),
        rewards=np.array(rew_list),
        values=np.array(val_list),
        dones=np.array(done_list, dtype=bool),
        masks=masks,
        final_fidelity=fid,
    )


def evaluate_policy(env: GateControlEnv, params: PolicyParams) -> float:
    """Deterministic mean-action episode with all regularizers off."""
    reg_off = RegularizerSpec(kind="none")
    obs = env.reset()
    rng_unused = np.random.default_rng(0)
    done = False
    fid = 0.0
    while not done:
        sample = sample_action(obs, params, reg_off, rng_unused, mode="eval")
        obs, _, done, info = env.step(sample.action)
        fid = info["fidelity"]
    return fid


def train(env_cfg: EnvConfig, cfg: PpoConfig, reg: RegularizerSpec):
    """Train a policy; returns ``(params, log)``.

    Collects ``batch_size`` episodes per update and evaluates the
    deterministic policy after each update; training halts early when
    ``stop_on_threshold`` is set and the evaluation fidelity reaches
    ``eval_stop_fidelity`` (the environment's own threshold by default).
    Fixed seeds give bit-identical logs.
    """
    cfg.validate()
    reg.validate()
    rng = np.random.default_rng(cfg.seed)
    params = init_policy(rng, hidden=cfg.hidden_sizes,
                         log_std_init=cfg.log_std_init)
    log = TrainingLog()
    if cfg.max_episodes == 0:
        return params, log
    adam = Adam(params.parameter_list(), cfg.learning_rate)
    env = GateControlEnv(env_cfg)
    stop_fidelity = (cfg.eval_stop_fidelity if cfg.eval_stop_fidelity is not None
                     else env_cfg.fidelity_threshold)
    episodes_done = 0
    while episodes_done < cfg.max_episodes:
        n_batch = min(cfg.batch_size, cfg.max_episodes - episodes_done)
        trajs = []
        for _ in range(n_batch):
            traj = rollout_episode(env, params, reg, rng)
            episodes_done += 1
            log.episodes.append(EpisodeRecord(
                episode=episodes_done,
                steps=len(traj),
                total_reward=float(np.sum(traj.rewards)),
                final_fidelity=traj.final_fidelity,
            ))
            trajs.append(traj)
        ppo_update(trajs, params, cfg, reg, adam, rng)
        eval_fidelity = evaluate_policy(env, params)
        log.evals.append(EvalRecord(episodes_done, eval_fidelity))
        if cfg.stop_on_threshold and eval_fidelity >= stop_fidelity:
            break
    return params, log
