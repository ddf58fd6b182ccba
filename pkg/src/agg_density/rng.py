"""Splittable, counter-based random streams keyed by (master seed, stream id)."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def _key(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        raise TypeError("boolean stream keys are ambiguous")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be nonnegative")
        return int(part)
    if isinstance(part, str):
        # stable across processes, unlike hash()
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported stream key {part!r}")


@dataclass(frozen=True)
class SeedProvenance:
    """Master seed plus a stream path.

    Two provenances with equal fields always produce bit-identical generators,
    and distinct stream paths give statistically independent Philox streams.
    """

    master: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if int(self.master) < 0:
            raise ValueError("master seed must be nonnegative")
        object.__setattr__(self, "master", int(self.master))
        object.__setattr__(self, "stream", tuple(_key(p) for p in self.stream))

    def child(self, *keys) -> "SeedProvenance":
        return SeedProvenance(self.master, self.stream + tuple(_key(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))

    def to_dict(self) -> dict:
        return {"master": self.master, "stream": list(self.stream)}


def as_seed(seed) -> SeedProvenance:
    if isinstance(seed, SeedProvenance):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required (no wall-clock seeding)")
    return SeedProvenance(int(seed))
