"""Seeded random streams.

Every stream is keyed by ``(master seed, replication index, purpose, sub-key)``
so a replication draws the same numbers no matter how many others run beside
it, and the same bus/stop draws the same numbers under every strategy.
"""

from __future__ import annotations

import numpy as np

TRAVEL = 0
ARRIVALS = 1
DESTINATIONS = 2


def stream(master_seed: int, replication: int, purpose: int, sub: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replication), purpose, int(sub)))
    return np.random.Generator(np.random.PCG64(seq))


class BufferedNormals:
    """Scalar standard-normal draws served from chunks of a numpy generator."""

    def __init__(self, gen: np.random.Generator, chunk: int = 512):
        self._gen = gen
        self._chunk = chunk
        self._buf: list[float] = []
        self._pos = 0

    def standard_normal(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.standard_normal(self._chunk).tolist()
            self._pos = 0
        z = self._buf[self._pos]
        self._pos += 1
        return z
