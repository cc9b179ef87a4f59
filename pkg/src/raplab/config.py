"""Experiment configuration: YAML in, validated dataclasses out.

A minimal file needs only ``mode``, ``env_id`` and ``seed``::

    mode: rap
    env_id: point_wind_walker
    seed: 0
    n: 3

Everything else takes the documented defaults. Unknown keys are rejected by
their dotted path (``ppo.gama`` -> error naming ``ppo.gama``).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .envs import DomainSpec, get_spec
from .errors import ConfigError
from .evaluation import EvalSpec
from .nn import HIDDEN
from .ppo import PPOConfig
from .trainer import MODES, TrainConfig

REQUIRED = ("mode", "env_id", "seed")
TOP_LEVEL = {
    "mode", "env_id", "seed", "seeds", "n", "alpha", "horizon", "iterations", "hidden",
    "checkpoint_every", "domain", "ppo", "adversary_ppo", "eval", "output_dir", "name",
}
DOMAIN_KEYS = {"mass", "friction", "shared_friction"}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    mode: str
    env_id: str
    seed: int
    seeds: Tuple[int, ...]
    n: int
    alpha: float
    horizon: int
    iterations: int
    hidden: Tuple[int, ...]
    checkpoint_every: int
    domain: Optional[Dict[str, Any]]
    ppo: PPOConfig
    adversary_ppo: Optional[PPOConfig]
    eval: EvalSpec
    output_dir: str

    def domain_spec(self) -> Optional[DomainSpec]:
        if self.domain is None:
            return None
        return DomainSpec.uniform(
            self.env_id,
            tuple(self.domain["mass"]),
            tuple(self.domain["friction"]),
            self.domain["shared_friction"],
        )

    def train_config(self, seed: Optional[int] = None, **overrides) -> TrainConfig:
        cfg = TrainConfig(
            mode=self.mode,
            env_id=self.env_id,
            seed=self.seed if seed is None else seed,
            n=self.n,
            alpha=self.alpha,
            domain=self.domain_spec(),
            ppo=self.ppo,
            adversary_ppo=self.adversary_ppo,
            horizon=self.horizon,
            iterations=self.iterations,
            hidden=self.hidden,
            checkpoint_every=self.checkpoint_every,
        )
        return replace(cfg, **overrides) if overrides else cfg

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "mode": self.mode,
            "env_id": self.env_id,
            "seed": self.seed,
            "seeds": list(self.seeds),
            "n": self.n,
            "alpha": self.alpha,
            "horizon": self.horizon,
            "iterations": self.iterations,
            "hidden": list(self.hidden),
            "checkpoint_every": self.checkpoint_every,
            "domain": self.domain,
            "ppo": asdict(self.ppo),
            "adversary_ppo": None if self.adversary_ppo is None else asdict(self.adversary_ppo),
            "eval": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.eval).items()},
            "output_dir": self.output_dir,
        }


def _typed(path: str, value, kind):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be a boolean")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path} must be a string")
        return value
    raise AssertionError(kind)


def _interval(path: str, value) -> List[float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{path} must be a [lo, hi] pair")
    lo, hi = (_typed(path, v, float) for v in value)
    if not 0 < lo <= hi:
        raise ConfigError(f"{path} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")
    return [lo, hi]


def _section(path: str, raw, cls):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for k, v in raw.items():
        if k not in known:
            raise ConfigError(f"unknown config key '{path}.{k}'")
        default = getattr(cls(), k)
        if isinstance(default, tuple):
            kwargs[k] = tuple(_interval(f"{path}.{k}", v))
        else:
            kwargs[k] = _typed(f"{path}.{k}", v, type(default))
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        msg = str(exc)
        # PPOConfig/EvalSpec already prefix their own section name
        raise ConfigError(msg if msg.startswith(path) else f"{path}: {msg}") from None


def parse_config(raw: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for k in raw:
        if k not in TOP_LEVEL:
            raise ConfigError(f"unknown config key '{k}'")
    for k in REQUIRED:
        if k not in raw:
            raise ConfigError(f"missing required config field '{k}'")
    mode = _typed("mode", raw["mode"], str)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    env_id = _typed("env_id", raw["env_id"], str)
    get_spec(env_id)
    seed = _typed("seed", raw["seed"], int)
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    seeds = raw.get("seeds", [seed])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list of integers")
    seeds = tuple(_typed("seeds[]", s, int) for s in seeds)
    if len(set(seeds)) != len(seeds) or min(seeds) < 0:
        raise ConfigError("seeds must be distinct non-negative integers")

    if "n" in raw:
        n = _typed("n", raw["n"], int)
    elif mode == "rap":
        raise ConfigError("mode 'rap' requires the population size 'n'")
    else:
        n = 1 if mode == "single_adversary" else 0
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")

    alpha = _typed("alpha", raw.get("alpha", 1.0), float)
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    horizon = _typed("horizon", raw.get("horizon", 200), int)
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    iterations = _typed("iterations", raw.get("iterations", 150), int)
    if iterations < 0:
        raise ConfigError(f"iterations must be >= 0, got {iterations}")
    ckpt = _typed("checkpoint_every", raw.get("checkpoint_every", 25), int)
    if ckpt < 1:
        raise ConfigError("checkpoint_every must be >= 1")
    hidden_raw = raw.get("hidden", list(HIDDEN))
    if not isinstance(hidden_raw, list) or not hidden_raw:
        raise ConfigError("hidden must be a non-empty list of layer widths")
    hidden = tuple(_typed("hidden[]", h, int) for h in hidden_raw)
    if min(hidden) < 1:
        raise ConfigError("hidden layer widths must be >= 1")

    ppo = _section("ppo", raw.get("ppo"), PPOConfig)
    adv_ppo = None
    if raw.get("adversary_ppo") is not None:
        # overrides are applied on top of the agent's PPO settings
        merged = raw["adversary_ppo"]
        if isinstance(merged, dict):
            merged = {**asdict(ppo), **merged}
        adv_ppo = _section("adversary_ppo", merged, PPOConfig)
    ev = _section("eval", raw.get("eval"), EvalSpec)

    domain = None
    if raw.get("domain") is not None or mode == "domain_randomization":
        draw = raw.get("domain") or {}
        if not isinstance(draw, dict):
            raise ConfigError("domain must be a mapping")
        for k in draw:
            if k not in DOMAIN_KEYS:
                raise ConfigError(f"unknown config key 'domain.{k}'")
        domain = {
            "mass": _interval("domain.mass", draw.get("mass", list(ev.mass_range))),
            "friction": _interval("domain.friction", draw.get("friction", list(ev.friction_range))),
            "shared_friction": _typed("domain.shared_friction", draw.get("shared_friction", True), bool),
        }

    name = _typed("name", raw.get("name", f"{mode}_{env_id}"), str)
    output_dir = _typed("output_dir", raw.get("output_dir", f"runs/{name}"), str)
    cfg = ExperimentConfig(
        name, mode, env_id, seed, seeds, n, alpha, horizon, iterations, hidden, ckpt,
        domain, ppo, adv_ppo, ev, output_dir,
    )
    cfg.train_config()  # cross-field checks (mode vs n, etc.)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_config(raw or {})


def canonical_yaml(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False)


def config_hash(cfg_or_dict) -> str:
    """SHA-256 over the sorted-key JSON form, excluding ``output_dir``."""
    d = cfg_or_dict.to_dict() if isinstance(cfg_or_dict, ExperimentConfig) else dict(cfg_or_dict)
    d.pop("output_dir", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
