"""Adversary-population training and its baseline modes.

Modes:

* ``rap`` - a population of ``n`` adversaries; one is drawn uniformly per rollout.
* ``single_adversary`` - the same loop with ``n = 1``.
* ``vanilla`` - plain PPO on the unperturbed environment.
* ``domain_randomization`` - plain PPO, dynamics drawn per rollout from a box.

Every adversary is trained zero-sum against the agent and is updated only on
the rollouts where it was the active adversary.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envs import (
    AdversarialEnv,
    DomainSpec,
    DynamicsParams,
    dr_sample,
    get_spec,
    make_env,
)
from .errors import ConfigError, NumericError
from .nn import HIDDEN, ActorCritic, AdamState, gaussian_sample, save_checkpoint
from .ppo import PPOConfig, Trajectory, TrajectoryBuilder, ppo_update
from .rng import Streams

log = logging.getLogger(__name__)

MODES = ("rap", "single_adversary", "vanilla", "domain_randomization")
ADVERSARIAL_MODES = ("rap", "single_adversary")


@dataclass(frozen=True)
class TrainConfig:
    mode: str
    env_id: str
    seed: int
    n: int = 0
    alpha: float = 1.0
    domain: Optional[DomainSpec] = None
    ppo: PPOConfig = field(default_factory=PPOConfig)
    adversary_ppo: Optional[PPOConfig] = None
    horizon: int = 200
    iterations: int = 150
    hidden: Tuple[int, ...] = HIDDEN
    checkpoint_every: int = 25

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        get_spec(self.env_id)
        if self.n < 0:
            raise ConfigError(f"population size n must be >= 0, got {self.n}")
        if self.mode == "rap" and self.n < 1:
            raise ConfigError("mode 'rap' needs a population size n >= 1")
        if self.mode == "single_adversary" and self.n != 1:
            raise ConfigError("mode 'single_adversary' requires n = 1")
        if self.mode in ("vanilla", "domain_randomization") and self.n != 0:
            raise ConfigError(f"mode {self.mode!r} trains no adversaries; n must be 0")
        if self.mode == "domain_randomization" and self.domain is None:
            raise ConfigError("mode 'domain_randomization' needs a domain spec")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.horizon < 1 or self.iterations < 0 or self.checkpoint_every < 1:
            raise ConfigError("horizon >= 1, iterations >= 0 and checkpoint_every >= 1 required")

    @property
    def adversary_config(self) -> PPOConfig:
        return self.adversary_ppo or self.ppo


@dataclass
class PopulationState:
    agent: ActorCritic
    adversaries: List[ActorCritic]
    agent_opt: AdamState
    adversary_opts: List[AdamState]
    counts: List[int]
    iteration: int = 0
    env_steps: int = 0


# population -----------------------------------------------------------------------
def init_population(cfg: TrainConfig, streams: Optional[Streams] = None) -> PopulationState:
    """Xavier-initialise the agent (policy id 0) and adversaries 1..n on their own streams."""
    if cfg.n < 0:
        raise ConfigError("population size must be >= 0")
    streams = streams or Streams(cfg.seed)
    spec = get_spec(cfg.env_id)
    obs_dim = spec.agent_obs_dim

    def build(pid: int) -> ActorCritic:
        return ActorCritic.init(
            obs_dim, spec.act_dim, streams.generator("init", pid), seed=cfg.seed, hidden=cfg.hidden
        )

    agent = build(0)
    adversaries = [build(i) for i in range(1, cfg.n + 1)]
    return PopulationState(
        agent=agent,
        adversaries=adversaries,
        agent_opt=AdamState.zeros_like(agent.arrays()),
        adversary_opts=[AdamState.zeros_like(a.arrays()) for a in adversaries],
        counts=[0] * cfg.n,
    )


def sample_adversary(n: int, rng: np.random.Generator) -> int:
    """Uniform draw from {1, ..., n}."""
    if n < 1:
        raise ConfigError("cannot sample from an empty adversary population")
    return int(rng.integers(1, n + 1))


# rollouts -----------------------------------------------------------------------------
def _fast_policy(model: ActorCritic):
    pw = [(w.T.copy(), b) for w, b in model.policy.layers]
    vw = [(w.T.copy(), b) for w, b in model.value.layers]
    log_std = model.policy.log_std

    def forward(layers, x):
        for w, b in layers[:-1]:
            x = np.tanh(x @ w + b)
        w, b = layers[-1]
        return x @ w + b

    def act(obs, rng):
        action, logp = gaussian_sample(forward(pw, obs), log_std, rng)
        return action, logp, float(forward(vw, obs)[0])

    def value(obs):
        return float(forward(vw, obs)[0])

    return act, value


@dataclass
class Rollout:
    agent: Trajectory
    adversary: Optional[Trajectory]
    params: DynamicsParams
    completed: bool  # False when cut short by the transition budget

    @property
    def episode_return(self) -> float:
        return self.agent.episode_return


def collect_rollout(
    agent: ActorCritic,
    adversary: Optional[ActorCritic],
    env_id: str,
    params: DynamicsParams,
    alpha: float,
    horizon: int,
    streams: Streams,
    adversary_index: Optional[int] = None,
    max_steps: Optional[int] = None,
) -> Rollout:
    """Run one episode; the adversary (if any) sees the agent's observation.

    ``streams`` supplies independent generators for the environment's
    initial state, the agent's action noise and the adversary's action noise.
    Adversary rewards are the exact negation of the agent rewards.
    """
    env = AdversarialEnv(make_env(env_id, horizon=horizon), alpha)
    obs = env.reset(params, streams.generator("env"))
    agent_rng = streams.generator("agent")
    agent_act, agent_value = _fast_policy(agent)
    tr_agent = TrajectoryBuilder(adversary_index)
    tr_adv = None
    if adversary is not None:
        adv_rng = streams.generator("adversary")
        adv_act, adv_value = _fast_policy(adversary)
        tr_adv = TrajectoryBuilder(adversary_index)
    limit = horizon if max_steps is None else min(horizon, max_steps)
    done = False
    steps = 0
    while not done and steps < limit:
        a, logp, v = agent_act(obs, agent_rng)
        if adversary is not None:
            a_adv, logp_adv, v_adv = adv_act(obs, adv_rng)
            next_obs, r, done = env.step(a, a_adv)
        else:
            next_obs, r, done = env.step(a)
        if not np.isfinite(r):
            raise NumericError("non-finite reward")
        steps += 1
        last = done or steps >= limit
        tr_agent.add(obs, a, logp, v, r, last)
        if tr_adv is not None:
            tr_adv.add(obs, a_adv, logp_adv, v_adv, -r, last)
        obs = next_obs
    terminal = done and not env.env.truncated
    boot_agent = 0.0 if terminal else agent_value(obs)
    agent_tr = tr_agent.build(boot_agent)
    adv_tr = None
    if tr_adv is not None:
        adv_tr = tr_adv.build(0.0 if terminal else adv_value(obs))
    return Rollout(agent_tr, adv_tr, params, completed=done)


# training loop --------------------------------------------------------------------
def _params_for_rollout(cfg: TrainConfig, streams: Streams) -> DynamicsParams:
    if cfg.mode == "domain_randomization":
        return dr_sample(cfg.domain, streams.generator("domain"))
    return DynamicsParams.nominal(cfg.env_id)


def collect_iteration(
    state: PopulationState, cfg: TrainConfig, streams: Streams
) -> List[Rollout]:
    """Collect exactly ``train_batch_size`` agent transitions for one iteration."""
    it = state.iteration
    budget = cfg.ppo.train_batch_size
    select_rng = streams.generator("select", it)
    rollouts: List[Rollout] = []
    steps = 0
    k = 0
    while steps < budget:
        rs = streams.sub("rollout", it, k)
        idx = sample_adversary(cfg.n, select_rng) if cfg.mode in ADVERSARIAL_MODES else None
        adversary = state.adversaries[idx - 1] if idx is not None else None
        ro = collect_rollout(
            state.agent,
            adversary,
            cfg.env_id,
            _params_for_rollout(cfg, rs),
            cfg.alpha,
            cfg.horizon,
            rs,
            adversary_index=idx,
            max_steps=budget - steps,
        )
        rollouts.append(ro)
        steps += len(ro.agent)
        k += 1
    return rollouts


def _returns_summary(rollouts: Sequence[Rollout]) -> Tuple[float, float, int]:
    done = [r.episode_return for r in rollouts if r.completed] or [
        r.episode_return for r in rollouts
    ]
    return float(np.mean(done)), float(np.std(done)), len(done)


def train_iteration(
    state: PopulationState, cfg: TrainConfig, streams: Optional[Streams] = None
) -> Tuple[PopulationState, Dict]:
    streams = streams or Streams(cfg.seed)
    it = state.iteration
    rollouts = collect_iteration(state, cfg, streams)
    agent_trajs = [r.agent for r in rollouts]
    counts = [0] * cfg.n
    per_adv: List[List[Trajectory]] = [[] for _ in range(cfg.n)]
    for r in rollouts:
        if r.adversary is not None:
            per_adv[r.adversary.adversary_index - 1].append(r.adversary)
            counts[r.adversary.adversary_index - 1] += 1

    agent, agent_opt, agent_stats = ppo_update(
        state.agent, state.agent_opt, agent_trajs, cfg.ppo, streams.generator("shuffle", it, 0)
    )
    adversaries, adv_opts, adv_stats = [], [], []
    for i, (adv, opt, trajs) in enumerate(zip(state.adversaries, state.adversary_opts, per_adv), 1):
        new_adv, new_opt, st = ppo_update(
            adv, opt, trajs, cfg.adversary_config, streams.generator("shuffle", it, i)
        )
        adversaries.append(new_adv)
        adv_opts.append(new_opt)
        adv_stats.append(st)

    steps = sum(len(t) for t in agent_trajs)
    mean_r, std_r, n_eps = _returns_summary(rollouts)
    new_state = PopulationState(
        agent, adversaries, agent_opt, adv_opts, counts, it + 1, state.env_steps + steps
    )
    stats = {
        "iteration": it,
        "mean_reward": mean_r,
        "std_reward": std_r,
        "episodes": n_eps,
        "rollouts": len(rollouts),
        "env_steps": steps,
        "counts": counts,
        "agent": agent_stats,
        "adversaries": adv_stats,
    }
    return new_state, stats


# checkpoints and curves -------------------------------------------------------------
def policy_filenames(n: int) -> List[str]:
    return ["agent.ckpt"] + [f"adversary_{i}.ckpt" for i in range(1, n + 1)]


def _atomic_write(path: Path, writer: Callable[[Path], None]):
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def write_checkpoints(state: PopulationState, cfg: TrainConfig, out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "env_id": cfg.env_id,
        "mode": cfg.mode,
        "n": cfg.n,
        "alpha": cfg.alpha,
        "iteration": state.iteration,
    }
    paths = []
    models = [state.agent, *state.adversaries]
    for pid, (name, model) in enumerate(zip(policy_filenames(cfg.n), models)):
        path = out_dir / name
        _atomic_write(path, lambda p, m=model: save_checkpoint(m, p, dict(meta, policy_id=pid)))
        paths.append(path)
    return paths


def curve_rows(curve: Sequence[Dict], n: int) -> Tuple[List[str], List[List]]:
    header = ["iteration", "mean_reward", "std_reward", "env_steps"] + [
        f"J_{i}" for i in range(1, n + 1)
    ]
    rows = [
        [c["iteration"], repr(float(c["mean_reward"])), repr(float(c["std_reward"])), c["env_steps"], *c["counts"]]
        for c in curve
    ]
    return header, rows


def train_config_hash(cfg: TrainConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_curve(curve: Sequence[Dict], n: int, path, config_hash: str = "", seed="") -> Path:
    path = Path(path)
    header, rows = curve_rows(curve, n)

    def write(p):
        with open(p, "w", newline="") as fh:
            fh.write(f"# config_hash={config_hash} seed={seed}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    _atomic_write(path, write)
    return path


def train(
    cfg: TrainConfig,
    out_dir=None,
    progress: Optional[Callable[[Dict], None]] = None,
    config_hash: Optional[str] = None,
) -> Tuple[PopulationState, List[Dict]]:
    """Run ``cfg.iterations`` iterations, checkpointing every ``checkpoint_every`` and at the end.

    ``config_hash`` labels the curve CSV; it defaults to a digest of ``cfg``.
    """
    h = config_hash or train_config_hash(cfg)
    streams = Streams(cfg.seed)
    state = init_population(cfg, streams)
    curve: List[Dict] = []
    for _ in range(cfg.iterations):
        state, stats = train_iteration(state, cfg, streams)
        curve.append(stats)
        if progress is not None:
            progress(stats)
        log.info(
            "iter %d mean_reward %.3f env_steps %d counts %s",
            stats["iteration"], stats["mean_reward"], state.env_steps, stats["counts"],
        )
        if out_dir is not None and state.iteration % cfg.checkpoint_every == 0:
            write_checkpoints(state, cfg, out_dir)
            write_curve(curve, cfg.n, Path(out_dir) / "curve.csv", h, cfg.seed)
    if out_dir is not None:
        write_checkpoints(state, cfg, out_dir)
        write_curve(curve, cfg.n, Path(out_dir) / "curve.csv", h, cfg.seed)
    return state, curve
