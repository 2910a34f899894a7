"""Reproducible random streams.

Every stream is identified by ``(master_seed, stream_index)``.  The child
generator is seeded by hashing the pair through :class:`numpy.random.SeedSequence`,
so stream derivation never depends on the order in which streams are created.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

_MASK64 = (1 << 64) - 1


def _mix(index: int, label: int) -> int:
    state = np.random.SeedSequence([index & _MASK64, label & _MASK64]).generate_state(2, np.uint32)
    return (int(state[0]) << 32) | int(state[1])


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0 or value > _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.PCG64(seq))

    def substream(self, *labels: int) -> "RngStream":
        """Deterministic child stream; ``labels`` are hashed into the index."""
        index = int(self.stream_index)
        for label in labels:
            index = _mix(index, int(label))
        return RngStream(self.master_seed, index)


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
