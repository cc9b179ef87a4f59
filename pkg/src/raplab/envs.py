"""Desk-scale continuous-control environments and their perturbation wrappers.

Two analytic systems stand in for the MuJoCo bodies:

``point_wind_walker``
    A planar point mass that is rewarded for moving east (+x). Linear drag
    acts independently on each axis; drifting more than 1 m off the y=0 line
    counts as toppling and ends the episode.
``swing_pendulum``
    A damped torque-limited pendulum that starts hanging down and is rewarded
    for holding the upright position (angle 0).

Both integrate with semi-implicit Euler: velocity first, then position from
the new velocity.
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericError, ProtocolError

AGENT_BOUND = 1.0
ADVERSARY_BOUND = 0.25
DEFAULT_HORIZON = 200
DEFAULT_DT = 0.05


@dataclass(frozen=True)
class DynamicsParams:
    mass_scale: float = 1.0
    friction_scales: Tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "mass_scale", float(self.mass_scale))
        object.__setattr__(self, "friction_scales", tuple(float(f) for f in self.friction_scales))
        values = (self.mass_scale, *self.friction_scales)
        if not self.friction_scales:
            raise ConfigError("at least one friction scale is required")
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise ConfigError(f"dynamics parameters must be finite and > 0, got {values}")

    @classmethod
    def nominal(cls, env_id: str) -> "DynamicsParams":
        return cls(1.0, (1.0,) * ENV_SPECS[env_id].n_friction)

    @classmethod
    def scalar(cls, env_id: str, mass: float, friction: float) -> "DynamicsParams":
        """One friction coefficient applied to every component."""
        return cls(mass, (friction,) * ENV_SPECS[env_id].n_friction)

    def to_record(self) -> Dict[str, float]:
        rec = {"mass_scale": self.mass_scale}
        for i, f in enumerate(self.friction_scales):
            rec[f"friction_{i}"] = f
        return rec

    @classmethod
    def from_record(cls, rec: Dict[str, float]) -> "DynamicsParams":
        unknown = set(rec) - {"mass_scale"} - {k for k in rec if k.startswith("friction_")}
        if unknown:
            raise ConfigError(f"unknown dynamics keys: {sorted(unknown)}")
        n = sum(1 for k in rec if k.startswith("friction_"))
        return cls(rec["mass_scale"], tuple(rec[f"friction_{i}"] for i in range(n)))


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    obs_dim: int
    act_dim: int
    n_friction: int
    friction_names: Tuple[str, ...]

    @property
    def agent_obs_dim(self) -> int:
        # environment observation plus the previous agent action
        return self.obs_dim + self.act_dim


ENV_SPECS: Dict[str, EnvSpec] = {
    "point_wind_walker": EnvSpec("point_wind_walker", 3, 2, 2, ("b_x", "b_y")),
    "swing_pendulum": EnvSpec("swing_pendulum", 3, 1, 1, ("b",)),
}


def get_spec(env_id: str) -> EnvSpec:
    try:
        return ENV_SPECS[env_id]
    except KeyError:
        raise ConfigError(
            f"unknown env_id {env_id!r}; expected one of {sorted(ENV_SPECS)}"
        ) from None


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


# dynamics ---------------------------------------------------------------------
class _Env:
    spec: EnvSpec

    def __init__(self, dt: float = DEFAULT_DT, horizon: int = DEFAULT_HORIZON):
        if dt <= 0 or horizon < 1:
            raise ConfigError("dt must be > 0 and horizon >= 1")
        self.dt = dt
        self.horizon = horizon
        self.state: Optional[np.ndarray] = None
        self.params: Optional[DynamicsParams] = None
        self.t = 0
        self.done = True
        self.prev_action = np.zeros(self.spec.act_dim)

    def _check_params(self, params: DynamicsParams):
        if len(params.friction_scales) != self.spec.n_friction:
            raise ConfigError(
                f"{self.spec.env_id} needs {self.spec.n_friction} friction scales, "
                f"got {len(params.friction_scales)}"
            )

    def reset(self, params: DynamicsParams, rng: np.random.Generator) -> np.ndarray:
        self._check_params(params)
        self.params = params
        self.state = self._initial_state(rng)
        self.t = 0
        self.done = False
        self.prev_action = np.zeros(self.spec.act_dim)
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.concatenate([self._observe(self.state), self.prev_action])

    def step(
        self, action_total: np.ndarray, agent_action: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, float, bool]:
        """Advance one step on the already-combined action.

        ``agent_action`` is the agent's own contribution; it feeds the control
        cost and the previous-action slot of the observation. Defaults to
        ``action_total``.
        """
        if self.done:
            raise ProtocolError("step() called on a finished episode; call reset()")
        action_total = np.asarray(action_total, dtype=np.float64).reshape(self.spec.act_dim)
        if not np.all(np.isfinite(action_total)):
            raise NumericError("non-finite action")
        own = action_total if agent_action is None else np.asarray(agent_action, dtype=np.float64)
        own = np.clip(own, -AGENT_BOUND, AGENT_BOUND)
        self.state = self.integrate(self.state, action_total, self.params, self.dt)
        self.t += 1
        self.prev_action = own
        reward, failed = self._reward(self.state, own)
        self.done = failed or self.t >= self.horizon
        return self.observation(), reward, self.done

    @property
    def truncated(self) -> bool:
        """True if the episode ended on the time limit rather than a failure."""
        return self.done and self.t >= self.horizon and not self._failed(self.state)

    def _failed(self, state) -> bool:
        return False


class PointWindWalker(_Env):
    spec = ENV_SPECS["point_wind_walker"]
    force_max = 1.0
    base_mass = 1.0
    base_drag = 0.5
    topple_y = 1.0

    def _initial_state(self, rng):
        x, y = rng.uniform(-0.01, 0.01, size=2)
        return np.array([x, y, 0.0, 0.0])

    @classmethod
    def integrate(cls, state, action_total, params: DynamicsParams, dt: float) -> np.ndarray:
        pos, vel = state[:2], state[2:]
        mass = cls.base_mass * params.mass_scale
        drag = cls.base_drag * np.asarray(params.friction_scales)
        accel = (cls.force_max * np.asarray(action_total) - drag * vel) / mass
        vel = vel + accel * dt
        pos = pos + vel * dt
        return np.concatenate([pos, vel])

    @staticmethod
    def _observe(state):
        # x is omitted: the task is translation invariant along x
        return state[1:].copy()

    def _failed(self, state) -> bool:
        return abs(state[1]) > self.topple_y

    def _reward(self, state, own):
        return float(state[2] - 0.01 * own @ own), self._failed(state)


class SwingPendulum(_Env):
    spec = ENV_SPECS["swing_pendulum"]
    torque_max = 2.0
    base_mass = 1.0
    length = 1.0
    gravity = 10.0
    base_damping = 0.1

    def _initial_state(self, rng):
        return np.array([wrap_angle(rng.uniform(math.pi - 0.1, math.pi + 0.1)), 0.0])

    @classmethod
    def integrate(cls, state, action_total, params: DynamicsParams, dt: float) -> np.ndarray:
        theta, omega = state
        mass = cls.base_mass * params.mass_scale
        inertia = mass * cls.length**2
        damping = cls.base_damping * params.friction_scales[0]
        torque = (
            mass * cls.gravity * cls.length * math.sin(theta)
            + cls.torque_max * float(np.asarray(action_total).reshape(-1)[0])
            - damping * omega
        )
        omega = omega + torque / inertia * dt
        theta = wrap_angle(theta + omega * dt)
        return np.array([theta, omega])

    @staticmethod
    def _observe(state):
        return np.array([math.cos(state[0]), math.sin(state[0]), state[1]])

    def _reward(self, state, own):
        theta, omega = state
        u = float(own[0])
        return -(theta**2 + 0.1 * omega**2 + 0.001 * u**2), False


_ENV_CLASSES = {"point_wind_walker": PointWindWalker, "swing_pendulum": SwingPendulum}


def make_env(env_id: str, dt: float = DEFAULT_DT, horizon: int = DEFAULT_HORIZON) -> _Env:
    get_spec(env_id)
    return _ENV_CLASSES[env_id](dt=dt, horizon=horizon)


# adversary wrapper -------------------------------------------------------------
def combine_actions(a_agent, a_adv, alpha: float) -> np.ndarray:
    """Clip agent and adversary actions separately, then add them.

    Clipping the sum instead would let the agent cancel the adversary by
    saturating its own action.
    """
    a_agent = np.clip(np.asarray(a_agent, dtype=np.float64), -AGENT_BOUND, AGENT_BOUND)
    a_adv = np.clip(np.asarray(a_adv, dtype=np.float64), -ADVERSARY_BOUND, ADVERSARY_BOUND)
    return a_agent + alpha * a_adv


class AdversarialEnv:
    """Noisy-action wrapper: the adversary's action is added to the agent's."""

    def __init__(self, env: _Env, alpha: float = 1.0):
        if alpha < 0:
            raise ConfigError("adversary strength alpha must be >= 0")
        self.env = env
        self.alpha = alpha

    @property
    def spec(self) -> EnvSpec:
        return self.env.spec

    def reset(self, params: DynamicsParams, rng: np.random.Generator) -> np.ndarray:
        return self.env.reset(params, rng)

    def step(self, a_agent, a_adv=None):
        if a_adv is None:
            total = np.clip(np.asarray(a_agent, dtype=np.float64), -AGENT_BOUND, AGENT_BOUND)
        else:
            total = combine_actions(a_agent, a_adv, self.alpha)
        return self.env.step(total, agent_action=a_agent)


# domain randomization -------------------------------------------------------------
@dataclass(frozen=True)
class DomainSpec:
    """Closed intervals for the mass scale and each friction scale.

    With ``shared_friction`` one friction draw is applied to every component,
    which is how the validation ranges are defined.
    """

    mass: Tuple[float, float]
    friction: Tuple[Tuple[float, float], ...]
    shared_friction: bool = True

    def __post_init__(self):
        for lo, hi in (self.mass, *self.friction):
            if not (0 < lo <= hi) or not math.isfinite(hi):
                raise ConfigError(f"invalid interval [{lo}, {hi}]")
        if self.shared_friction and len(set(self.friction)) > 1:
            raise ConfigError("shared friction requires identical intervals")

    @classmethod
    def uniform(cls, env_id: str, mass=(0.7, 1.3), friction=(0.7, 1.3), shared: bool = True):
        k = get_spec(env_id).n_friction
        return cls(tuple(mass), (tuple(friction),) * k, shared)


def dr_sample(spec: DomainSpec, rng: np.random.Generator) -> DynamicsParams:
    mass = rng.uniform(*spec.mass)
    if spec.shared_friction:
        f = rng.uniform(*spec.friction[0])
        return DynamicsParams(mass, (f,) * len(spec.friction))
    return DynamicsParams(mass, tuple(rng.uniform(lo, hi) for lo, hi in spec.friction))


class DomainRandomizedEnv:
    """Draws fresh dynamics parameters at every reset and holds them for the episode."""

    def __init__(self, env: _Env, domain: DomainSpec):
        if len(domain.friction) != env.spec.n_friction:
            raise ConfigError("domain spec does not match the environment's friction components")
        self.env = env
        self.domain = domain

    @property
    def spec(self) -> EnvSpec:
        return self.env.spec

    @property
    def params(self) -> Optional[DynamicsParams]:
        return self.env.params

    def reset(self, rng: np.random.Generator, params_rng: Optional[np.random.Generator] = None):
        params = dr_sample(self.domain, params_rng if params_rng is not None else rng)
        return self.env.reset(params, rng)

    def step(self, action_total, agent_action=None):
        return self.env.step(action_total, agent_action)


# holdout tests -------------------------------------------------------------------
def holdout_suite(env_id: str, hi: float = 1.3, lo: float = 0.7) -> List[DynamicsParams]:
    """Hi/lo coefficient assignments over the environment's components.

    Bit ``i`` of the assignment mask set means component ``i`` receives ``hi``.
    Walker: the two mixed assignments over its two drag axes. Pendulum: all
    four (mass, damping) combinations.
    """
    spec = get_spec(env_id)
    if not (hi > lo > 0):
        raise ConfigError(f"holdout needs hi > lo > 0, got hi={hi}, lo={lo}")
    suite = []
    if env_id == "swing_pendulum":
        for mask in range(4):
            mass = hi if mask & 1 else lo
            fric = hi if mask & 2 else lo
            suite.append(DynamicsParams(mass, (fric,)))
        return suite
    k = spec.n_friction
    for mask in range(1, 2**k - 1):
        suite.append(DynamicsParams(1.0, tuple(hi if mask >> i & 1 else lo for i in range(k))))
    return suite


def holdout_names(n: int) -> List[str]:
    letters = string.ascii_uppercase
    names = list(letters)
    for a, b in itertools.product(letters, letters):
        if len(names) >= n:
            break
        names.append(a + b)
    return names[:n]
