"""GAE, the clipped PPO objective, and the minibatch update loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, backward, minimum
from .errors import ConfigError, NumericError, ShapeError
from .nn import ActorCritic, AdamState, adam_step, gaussian_entropy, gaussian_logp, mlp_forward_graph

log = logging.getLogger(__name__)

ADV_EPS = 1e-8


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.995
    lam: float = 0.9
    clip: float = 0.3
    value_coeff: float = 1.0
    entropy_coeff: float = 0.0
    lr: float = 5e-4
    minibatch_size: int = 256
    sgd_epochs: int = 10
    train_batch_size: int = 4000

    def __post_init__(self):
        for name in ("gamma", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"ppo.{name} must lie in [0, 1], got {v}")
        if self.clip <= 0:
            raise ConfigError(f"ppo.clip must be > 0, got {self.clip}")
        for name in ("value_coeff", "entropy_coeff"):
            if getattr(self, name) < 0:
                raise ConfigError(f"ppo.{name} must be >= 0")
        if self.lr <= 0:
            raise ConfigError(f"ppo.lr must be > 0, got {self.lr}")
        for name in ("minibatch_size", "sgd_epochs", "train_batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"ppo.{name} must be >= 1")

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]


@dataclass
class Trajectory:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    adversary_index: Optional[int] = None
    bootstrap_value: float = 0.0

    def __post_init__(self):
        n = len(self.rewards)
        if n < 1:
            raise ShapeError("a trajectory needs at least one step")
        for name in ("obs", "actions", "logp", "values", "dones"):
            if len(getattr(self, name)) != n:
                raise ShapeError(f"trajectory field {name} has the wrong length")
        if np.any(self.dones[:-1]):
            raise ShapeError("done may only be set on the final step")

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def episode_return(self) -> float:
        return float(np.sum(self.rewards))


class TrajectoryBuilder:
    def __init__(self, adversary_index: Optional[int] = None):
        self.adversary_index = adversary_index
        self.obs, self.actions, self.logp, self.values, self.rewards, self.dones = (
            [], [], [], [], [], []
        )

    def add(self, obs, action, logp, value, reward, done):
        self.obs.append(obs)
        self.actions.append(action)
        self.logp.append(logp)
        self.values.append(value)
        self.rewards.append(reward)
        self.dones.append(done)

    def build(self, bootstrap_value: float) -> Trajectory:
        return Trajectory(
            np.array(self.obs),
            np.array(self.actions),
            np.array(self.logp, dtype=np.float64),
            np.array(self.values, dtype=np.float64),
            np.array(self.rewards, dtype=np.float64),
            np.array(self.dones, dtype=bool),
            self.adversary_index,
            float(bootstrap_value),
        )


def gae(rewards, values, bootstrap: float, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets for one trajectory."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise ShapeError(f"rewards {rewards.shape} and values {values.shape} must be equal 1-D")
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ConfigError("gamma and lambda must lie in [0, 1]")
    T = len(rewards)
    adv = np.empty(T)
    next_value = bootstrap
    running = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.advantages)

    def take(self, idx) -> "Batch":
        return Batch(
            self.obs[idx], self.actions[idx], self.logp_old[idx], self.advantages[idx], self.returns[idx]
        )


def build_batch(trajectories: Sequence[Trajectory], cfg: PPOConfig, normalize: bool = True) -> Batch:
    advs, rets = [], []
    for tr in trajectories:
        a, r = gae(tr.rewards, tr.values, tr.bootstrap_value, cfg.gamma, cfg.lam)
        advs.append(a)
        rets.append(r)
    adv = np.concatenate(advs)
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + ADV_EPS)
    return Batch(
        np.concatenate([t.obs for t in trajectories]),
        np.concatenate([t.actions for t in trajectories]),
        np.concatenate([t.logp for t in trajectories]),
        adv,
        np.concatenate(rets),
    )


def _graph_params(model: ActorCritic, leaves=None):
    if leaves is None:
        leaves = [Tensor(a, requires_grad=True) for a in model.arrays()]
    n_pol = 2 * len(model.policy.layers)
    pol_layers = [(leaves[i], leaves[i + 1]) for i in range(0, n_pol, 2)]
    log_std = leaves[n_pol]
    val = leaves[n_pol + 1 :]
    val_layers = [(val[i], val[i + 1]) for i in range(0, len(val), 2)]
    return leaves, pol_layers, log_std, val_layers


def ppo_loss(batch: Batch, model: ActorCritic, cfg: PPOConfig, leaves=None):
    """Build the PPO loss graph.

    Returns ``(loss, leaves, terms)``: the scalar loss tensor, the parameter
    leaves in ``model.arrays()`` order, and a dict of float diagnostics.
    """
    leaves, pol_layers, log_std, val_layers = _graph_params(model, leaves)
    obs = Tensor(batch.obs)
    mean = mlp_forward_graph(pol_layers, obs)
    logp = gaussian_logp(mean, log_std, batch.actions)
    ratio = (logp - batch.logp_old).exp()
    if not np.all(np.isfinite(ratio.value)):
        raise NumericError("non-finite probability ratio")
    adv = batch.advantages
    surrogate = minimum(ratio * adv, ratio.clip(1.0 - cfg.clip, 1.0 + cfg.clip) * adv)
    policy_loss = -surrogate.mean()
    v = mlp_forward_graph(val_layers, obs).sum(axis=-1)
    value_loss = (v - batch.returns).square().mean()
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + cfg.value_coeff * value_loss - cfg.entropy_coeff * entropy
    terms = {
        "loss": float(loss.value),
        "policy_loss": float(policy_loss.value),
        "value_loss": float(value_loss.value),
        "entropy": float(entropy.value),
        "kl": float(np.mean(batch.logp_old - logp.value)),
        "clip_frac": float(np.mean(np.abs(ratio.value - 1.0) > cfg.clip)),
    }
    return loss, leaves, terms


def loss_and_grads(batch: Batch, model: ActorCritic, cfg: PPOConfig):
    loss, leaves, terms = ppo_loss(batch, model, cfg)
    return terms, backward(loss, leaves)


def ppo_update(
    model: ActorCritic,
    opt_state: Optional[AdamState],
    trajectories: Sequence[Trajectory],
    cfg: PPOConfig,
    rng: np.random.Generator,
) -> Tuple[ActorCritic, AdamState, Dict[str, float]]:
    """Run ``sgd_epochs`` passes of shuffled minibatch Adam steps.

    An empty trajectory list is a declared no-op: the inputs come back
    unchanged and ``stats["skipped"]`` is 1.
    """
    if opt_state is None:
        opt_state = AdamState.zeros_like(model.arrays())
    if not trajectories:
        return model, opt_state, {"skipped": 1.0, "n_transitions": 0.0}
    batch = build_batch(trajectories, cfg)
    n = len(batch)
    mb = min(cfg.minibatch_size, n)
    arrays = model.arrays()
    terms_acc: Dict[str, float] = {}
    grad_norm = 0.0
    n_steps = 0
    bad_steps = 0
    for _ in range(cfg.sgd_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start : start + mb]
            current = model.with_arrays(arrays)
            try:
                terms, grads = loss_and_grads(batch.take(idx), current, cfg)
                arrays, opt_state = adam_step(arrays, grads, opt_state, cfg.lr)
            except NumericError as exc:
                bad_steps += 1
                log.warning("skipping minibatch update: %s", exc)
                continue
            grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            for k, v in terms.items():
                terms_acc[k] = terms_acc.get(k, 0.0) + v
            n_steps += 1
    new_model = model.with_arrays(arrays)
    stats = {k: v / max(n_steps, 1) for k, v in terms_acc.items()}
    stats.update(
        skipped=0.0,
        n_transitions=float(n),
        grad_norm=grad_norm,
        sgd_steps=float(n_steps),
        bad_steps=float(bad_steps),
    )
    return new_model, opt_state, stats
