"""Seeded random streams.

Every source of randomness in a run is derived from a single 64-bit seed
through named sub-streams, so dataset generation, weight initialization and
swarm evolution can be varied independently while staying reproducible.
The generator is numpy's PCG64, which is platform-independent for a given
seed.
"""

from __future__ import annotations

import zlib

import numpy as np


class RandomStream:
    """A named, seeded random stream with derivable sub-streams."""

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = path
        self._gen: np.random.Generator | None = None

    def substream(self, name: str) -> "RandomStream":
        """Derive an independent stream keyed by ``name``.

        The derivation is a documented function of (seed, names along the
        path): each name is hashed with CRC-32 and appended to the PCG64
        spawn key.
        """
        key = zlib.crc32(name.encode("utf-8"))
        return RandomStream(self.seed, self.path + (key,))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen
