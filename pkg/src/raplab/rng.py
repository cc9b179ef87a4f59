"""Named random substreams derived from one master seed.

Every consumer of randomness asks for its own stream by name, e.g.
``streams.generator("rollout", 3, "agent")``. Streams are independent of the
order in which they are requested, which keeps runs bit-reproducible when the
set of consumers changes (adding adversaries does not perturb the agent).
"""
from __future__ import annotations

import zlib
from typing import Union

import numpy as np

Key = Union[str, int]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    # strings live above 2**32 so they never collide with small integer keys
    return (1 << 32) + zlib.crc32(str(key).encode())


class Streams:
    def __init__(self, seed: int, prefix: tuple = ()):
        self.seed = int(seed)
        self.prefix = tuple(prefix)

    def sub(self, *keys: Key) -> "Streams":
        return Streams(self.seed, self.prefix + tuple(_key_to_int(k) for k in keys))

    def seed_sequence(self, *keys: Key) -> np.random.SeedSequence:
        spawn_key = self.prefix + tuple(_key_to_int(k) for k in keys)
        return np.random.SeedSequence(self.seed, spawn_key=spawn_key)

    def generator(self, *keys: Key) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence(*keys)))

    def __repr__(self) -> str:
        return f"Streams(seed={self.seed}, prefix={self.prefix})"
