"""Transfer grids, holdout suites, swap matrices and adversary-count sweeps.

All evaluation returns are undiscounted episode returns. Every rollout ``k``
draws from its own substream of the evaluation seed, so two cells evaluated
with the same seed face the same initial states and noise (common random
numbers) and results do not depend on evaluation order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envs import DynamicsParams, get_spec, holdout_names, holdout_suite
from .errors import ConfigError, RapLabError, ShapeError
from .nn import ActorCritic
from .rng import Streams
from .trainer import TrainConfig, collect_rollout, train

log = logging.getLogger(__name__)

DEFAULT_ROLLOUTS = 20


@dataclass(frozen=True)
class EvalScore:
    mean: float
    std: float
    n_rollouts: int

    @classmethod
    def from_returns(cls, returns: Sequence[float]) -> "EvalScore":
        r = np.asarray(returns, dtype=np.float64)
        if r.size < 1:
            raise ConfigError("an evaluation needs at least one rollout")
        return cls(float(r.mean()), float(r.std()), int(r.size))


@dataclass(frozen=True)
class EvalSpec:
    mass_range: Tuple[float, float] = (0.7, 1.3)
    friction_range: Tuple[float, float] = (0.7, 1.3)
    grid_points: int = 5
    holdout_hi: float = 1.3
    holdout_lo: float = 0.7
    n_rollouts: int = DEFAULT_ROLLOUTS
    seed: int = 0

    def __post_init__(self):
        for name in ("mass_range", "friction_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"eval.{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if self.grid_points < 2:
            raise ConfigError("eval.grid_points must be >= 2")
        if not self.holdout_hi > self.holdout_lo > 0:
            raise ConfigError("eval.holdout_hi > eval.holdout_lo > 0 required")
        if self.n_rollouts < 1:
            raise ConfigError("eval.n_rollouts must be >= 1")


def _check_dims(agent: ActorCritic, env_id: str, adversary: Optional[ActorCritic] = None):
    spec = get_spec(env_id)
    for m in (agent, adversary):
        if m is None:
            continue
        if m.obs_dim != spec.agent_obs_dim or m.act_dim != spec.act_dim:
            raise ShapeError(
                f"checkpoint dims (obs {m.obs_dim}, act {m.act_dim}) do not match "
                f"{env_id} (obs {spec.agent_obs_dim}, act {spec.act_dim})"
            )


def episode_returns(
    agent: ActorCritic,
    env_id: str,
    params: DynamicsParams,
    n_rollouts: int = DEFAULT_ROLLOUTS,
    seed: int = 0,
    adversary: Optional[ActorCritic] = None,
    alpha: float = 1.0,
    horizon: int = 200,
) -> List[float]:
    _check_dims(agent, env_id, adversary)
    streams = Streams(seed).sub("eval")
    return [
        collect_rollout(
            agent, adversary, env_id, params, alpha, horizon, streams.sub(k)
        ).episode_return
        for k in range(n_rollouts)
    ]


def evaluate(
    agent: ActorCritic,
    env_id: str,
    params: DynamicsParams,
    n_rollouts: int = DEFAULT_ROLLOUTS,
    seed: int = 0,
    horizon: int = 200,
) -> EvalScore:
    """Mean and std of the agent's return on fixed dynamics, no adversary."""
    return EvalScore.from_returns(
        episode_returns(agent, env_id, params, n_rollouts, seed, horizon=horizon)
    )


def evaluate_against(
    agent: ActorCritic,
    adversaries: Sequence[ActorCritic],
    env_id: str,
    alpha: float,
    n_rollouts: int = DEFAULT_ROLLOUTS,
    seed: int = 0,
    horizon: int = 200,
) -> EvalScore:
    """Pool ``n_rollouts`` episodes against each adversary on nominal dynamics."""
    params = DynamicsParams.nominal(env_id)
    pooled: List[float] = []
    for adv in adversaries:
        pooled += episode_returns(agent, env_id, params, n_rollouts, seed, adv, alpha, horizon)
    return EvalScore.from_returns(pooled)


# transfer grid -------------------------------------------------------------------
@dataclass
class TransferGrid:
    mass_values: List[float]
    friction_values: List[float]
    scores: List[List[Optional[EvalScore]]]  # [mass index][friction index]
    failures: Dict[Tuple[int, int], str] = field(default_factory=dict)

    def means(self) -> np.ndarray:
        return np.array(
            [[np.nan if s is None else s.mean for s in row] for row in self.scores]
        )

    def mean(self) -> float:
        """Unweighted mean of cell means (failed cells excluded)."""
        return float(np.nanmean(self.means()))


def transfer_grid(
    agent: ActorCritic,
    env_id: str,
    mass_range=(0.7, 1.3),
    friction_range=(0.7, 1.3),
    grid_points: int = 5,
    n_rollouts: int = DEFAULT_ROLLOUTS,
    seed: int = 0,
    horizon: int = 200,
) -> TransferGrid:
    """Evaluate on a uniform mass x friction grid; one friction scale for all components."""
    if grid_points < 2:
        raise ConfigError("grid_points must be >= 2")
    masses = [float(v) for v in np.linspace(*mass_range, grid_points)]
    frictions = [float(v) for v in np.linspace(*friction_range, grid_points)]
    _check_dims(agent, env_id)
    scores: List[List[Optional[EvalScore]]] = []
    failures: Dict[Tuple[int, int], str] = {}
    for i, m in enumerate(masses):
        row = []
        for j, f in enumerate(frictions):
            try:
                params = DynamicsParams.scalar(env_id, m, f)
                row.append(evaluate(agent, env_id, params, n_rollouts, seed, horizon))
            except RapLabError as exc:
                log.warning("grid cell (mass=%s, friction=%s) failed: %s", m, f, exc)
                failures[(i, j)] = str(exc)
                row.append(None)
        scores.append(row)
    return TransferGrid(masses, frictions, scores, failures)


# holdout ---------------------------------------------------------------------------
@dataclass
class HoldoutResult:
    names: List[str]
    params: List[DynamicsParams]
    scores: List[EvalScore]

    @property
    def aggregate(self) -> float:
        """Unweighted mean of per-test means; per-test stds are not pooled."""
        return float(np.mean([s.mean for s in self.scores]))


def holdout_eval(
    agent: ActorCritic,
    env_id: str,
    suite: Sequence[DynamicsParams],
    n_rollouts: int = DEFAULT_ROLLOUTS,
    seed: int = 0,
    horizon: int = 200,
) -> HoldoutResult:
    names = holdout_names(len(suite))
    scores = [evaluate(agent, env_id, p, n_rollouts, seed, horizon) for p in suite]
    return HoldoutResult(names, list(suite), scores)


# swap matrix ------------------------------------------------------------------------
@dataclass
class SwapMatrix:
    labels: List[str]
    scores: List[List[EvalScore]]  # [agent seed][adversary seed]
    alpha: float

    def means(self) -> np.ndarray:
        return np.array([[s.mean for s in row] for row in self.scores])

    def relative_degradation(self) -> float:
        """Mean over agents of (diag - mean off-diagonal) / |diag|.

        Larger values mean the agent is more exploitable by adversaries it was
        not trained against.
        """
        m = self.means()
        S = len(m)
        if S < 2:
            return 0.0
        vals = []
        for s in range(S):
            off = np.delete(m[s], s).mean()
            vals.append((m[s, s] - off) / max(abs(m[s, s]), 1e-12))
        return float(np.mean(vals))


def swap_matrix(
    agents: Sequence[ActorCritic],
    adversary_sets: Sequence[Sequence[ActorCritic]],
    env_id: str,
    alpha: float,
    n_rollouts: int = DEFAULT_ROLLOUTS,
    seed: int = 0,
    labels: Optional[Sequence[str]] = None,
    horizon: int = 200,
) -> SwapMatrix:
    """Cell (s, s') pools the returns of agent s against every adversary of run s'."""
    S = len(agents)
    if S != len(adversary_sets) or S < 1:
        raise ConfigError("need one adversary set per agent")
    sizes = {len(a) for a in adversary_sets}
    if len(sizes) != 1 or 0 in sizes:
        raise ConfigError(f"every run must have the same, non-zero adversary count; got {sizes}")
    labels = list(labels) if labels is not None else [str(i) for i in range(S)]
    scores = [
        [
            evaluate_against(agent, advs, env_id, alpha, n_rollouts, seed, horizon)
            for advs in adversary_sets
        ]
        for agent in agents
    ]
    return SwapMatrix(labels, scores, alpha)


# adversary-count sweep ------------------------------------------------------------------
@dataclass
class SweepRow:
    count: int
    grid_mean: float
    grid_std: float
    holdout_mean: float
    holdout_std: float
    total_env_steps: int
    seeds_ok: List[int]
    seeds_failed: List[int]


def _summarise(values: Sequence[float]) -> Tuple[float, float]:
    if not values:
        return math.nan, math.nan
    return float(np.mean(values)), float(np.std(values))


def adversary_count_sweep(
    base_cfg: TrainConfig,
    counts: Sequence[int],
    seeds: Sequence[int],
    eval_spec: EvalSpec,
    trainer: Callable = train,
) -> List[SweepRow]:
    """Train ``rap`` agents for each population size; the step budget is shared by all.

    Every run uses ``base_cfg``'s iteration count and transfer budget, so
    total environment steps per count are identical by construction.
    """
    if not counts or any(c < 1 for c in counts):
        raise ConfigError("adversary counts must all be >= 1")
    rows = []
    for count in counts:
        grid_means, hold_means = [], []
        total_steps = 0
        ok, failed = [], []
        for seed in seeds:
            cfg = replace(base_cfg, mode="rap", n=count, seed=seed)
            try:
                state, _ = trainer(cfg)
            except RapLabError as exc:
                log.error("sweep run count=%d seed=%d failed: %s", count, seed, exc)
                failed.append(seed)
                continue
            total_steps += state.env_steps
            grid = transfer_grid(
                state.agent,
                cfg.env_id,
                eval_spec.mass_range,
                eval_spec.friction_range,
                eval_spec.grid_points,
                eval_spec.n_rollouts,
                eval_spec.seed,
                cfg.horizon,
            )
            suite = holdout_suite(cfg.env_id, eval_spec.holdout_hi, eval_spec.holdout_lo)
            hold = holdout_eval(
                state.agent, cfg.env_id, suite, eval_spec.n_rollouts, eval_spec.seed, cfg.horizon
            )
            grid_means.append(grid.mean())
            hold_means.append(hold.aggregate)
            ok.append(seed)
        gm, gs = _summarise(grid_means)
        hm, hs = _summarise(hold_means)
        rows.append(SweepRow(count, gm, gs, hm, hs, total_steps, ok, failed))
    return rows
