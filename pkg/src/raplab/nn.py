"""Parameter storage, MLP forward passes, the diagonal Gaussian head and Adam."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError, NumericError, ShapeError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HIDDEN = (64, 64)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ParameterSet:
    """Weights ``(out, in)`` and biases ``(out,)`` per layer, plus an optional log_std.

    Treated as immutable: optimizer steps return a new instance.
    """

    layers: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    log_std: Optional[np.ndarray] = None

    def __post_init__(self):
        prev = None
        for w, b in self.layers:
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"bad layer shapes {w.shape} / {b.shape}")
            if prev is not None and w.shape[1] != prev:
                raise ShapeError("layer shapes do not chain")
            prev = w.shape[0]

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def arrays(self) -> List[np.ndarray]:
        out = [a for wb in self.layers for a in wb]
        if self.log_std is not None:
            out.append(self.log_std)
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "ParameterSet":
        arrays = list(arrays)
        n = 2 * len(self.layers)
        layers = tuple((arrays[i], arrays[i + 1]) for i in range(0, n, 2))
        log_std = arrays[n] if self.log_std is not None else None
        return ParameterSet(layers, log_std)

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return h.hexdigest()

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def xavier_init(
    layer_shapes: Sequence[Tuple[int, int]],
    rng: np.random.Generator,
    with_log_std: bool = False,
) -> ParameterSet:
    """Uniform Glorot init: ``U(-sqrt(6/(in+out)), +sqrt(6/(in+out)))``, zero biases."""
    layers = []
    for fan_in, fan_out in layer_shapes:
        if fan_in < 1 or fan_out < 1:
            raise ConfigError(f"layer dimensions must be >= 1, got ({fan_in}, {fan_out})")
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append((w, np.zeros(fan_out)))
    log_std = np.zeros(layer_shapes[-1][1]) if with_log_std else None
    return ParameterSet(tuple(layers), log_std)


def mlp_shapes(in_dim: int, out_dim: int, hidden: Sequence[int] = HIDDEN) -> List[Tuple[int, int]]:
    dims = [in_dim, *hidden, out_dim]
    return list(zip(dims[:-1], dims[1:]))


def mlp_forward(params: ParameterSet, x: np.ndarray) -> np.ndarray:
    """tanh hidden layers, linear output. ``x`` may be ``(in,)`` or ``(batch, in)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_dim:
        raise ShapeError(f"input dim {x.shape[-1]} != network input dim {params.in_dim}")
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        x = x @ w.T + b
        if i < last:
            x = np.tanh(x)
    return x


def mlp_forward_graph(layers: Sequence[Tuple[Tensor, Tensor]], x: Tensor) -> Tensor:
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        x = x @ w.T + b
        if i < last:
            x = x.tanh()
    return x


# diagonal Gaussian ------------------------------------------------------------
def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite input to Gaussian policy head")


def clamp_log_std(log_std):
    if isinstance(log_std, Tensor):
        return log_std.clip(LOG_STD_MIN, LOG_STD_MAX)
    return np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)


def gaussian_sample(
    mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, float]:
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    _check_finite(mean, log_std)
    log_std = clamp_log_std(log_std)
    z = rng.standard_normal(mean.shape)
    action = mean + np.exp(log_std) * z
    return action, gaussian_logp(mean, log_std, action)


def gaussian_logp(mean, log_std, action):
    """Log-density of a diagonal Gaussian, summed over the last axis.

    Works on numpy arrays (returns floats / arrays) and on graph tensors.
    """
    if isinstance(mean, Tensor) or isinstance(log_std, Tensor):
        log_std = clamp_log_std(log_std)
        z = (action - mean) * (-log_std).exp()
        return (z.square() * -0.5 - log_std - _HALF_LOG_2PI).sum(axis=-1)
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if mean.shape[-1] != action.shape[-1] or log_std.shape[-1] != action.shape[-1]:
        raise ShapeError("mean, log_std and action dims differ")
    log_std = clamp_log_std(log_std)
    z = (action - mean) * np.exp(-log_std)
    out = np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_entropy(log_std):
    if isinstance(log_std, Tensor):
        return (clamp_log_std(log_std) + (0.5 + _HALF_LOG_2PI)).sum()
    return float(np.sum(clamp_log_std(np.asarray(log_std)) + 0.5 + _HALF_LOG_2PI))


# Adam ------------------------------------------------------------------------
@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[List[np.ndarray], AdamState]:
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state disagree in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


# actor-critic bundle -------------------------------------------------------------
@dataclass(frozen=True)
class ActorCritic:
    """A Gaussian policy network and its value network."""

    policy: ParameterSet
    value: ParameterSet
    seed: int = 0

    @classmethod
    def init(
        cls,
        obs_dim: int,
        act_dim: int,
        rng: np.random.Generator,
        seed: int = 0,
        hidden: Sequence[int] = HIDDEN,
    ):
        policy = xavier_init(mlp_shapes(obs_dim, act_dim, hidden), rng, with_log_std=True)
        value = xavier_init(mlp_shapes(obs_dim, 1, hidden), rng)
        return cls(policy, value, seed)

    @property
    def obs_dim(self) -> int:
        return self.policy.in_dim

    @property
    def act_dim(self) -> int:
        return self.policy.out_dim

    def arrays(self) -> List[np.ndarray]:
        return self.policy.arrays() + self.value.arrays()

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "ActorCritic":
        k = len(self.policy.arrays())
        return ActorCritic(
            self.policy.with_arrays(arrays[:k]), self.value.with_arrays(arrays[k:]), self.seed
        )

    def digest(self) -> str:
        return hashlib.sha256((self.policy.digest() + self.value.digest()).encode()).hexdigest()

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, float, float]:
        """Sample an action; returns ``(action, logp, value)``."""
        mean = mlp_forward(self.policy, obs)
        action, logp = gaussian_sample(mean, self.policy.log_std, rng)
        return action, logp, float(mlp_forward(self.value, obs)[0])

    def value_of(self, obs: np.ndarray) -> float:
        return float(mlp_forward(self.value, obs)[0])


# checkpoints -------------------------------------------------------------------
def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x).hex() for x in a.ravel()]}


def _decode_array(d: dict) -> np.ndarray:
    flat = np.array([float.fromhex(x) for x in d["data"]], dtype=np.float64)
    return flat.reshape(d["shape"])


def _encode_params(p: ParameterSet) -> dict:
    return {
        "layers": [{"weight": _encode_array(w), "bias": _encode_array(b)} for w, b in p.layers],
        "log_std": None if p.log_std is None else _encode_array(p.log_std),
    }


def _decode_params(d: dict) -> ParameterSet:
    layers = tuple((_decode_array(l["weight"]), _decode_array(l["bias"])) for l in d["layers"])
    log_std = None if d["log_std"] is None else _decode_array(d["log_std"])
    return ParameterSet(layers, log_std)


def save_checkpoint(model: ActorCritic, path, meta: Optional[dict] = None) -> Path:
    """Write a bit-exact JSON checkpoint (floats stored as hex literals)."""
    path = Path(path)
    doc = {
        "format": "raplab-checkpoint/1",
        "seed": model.seed,
        "meta": meta or {},
        "policy": _encode_params(model.policy),
        "value": _encode_params(model.value),
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return path


def load_checkpoint(path) -> Tuple[ActorCritic, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "raplab-checkpoint/1":
        raise ShapeError(f"{path}: not a raplab checkpoint")
    model = ActorCritic(_decode_params(doc["policy"]), _decode_params(doc["value"]), doc["seed"])
    return model, doc["meta"]
