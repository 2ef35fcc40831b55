"""Deterministic random streams.

Every stochastic operation takes a :class:`RandomStream`.  A stream is a pure
value (seed, stream_id): the same pair always produces the same draws, no
matter how many other streams are in flight, which makes parallel sweeps
reproducible cell by cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    # One step of the splitmix64 mixer; enough to decorrelate derived ids.
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RandomStream:
    """Seeded, forkable source of randomness."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh numpy Generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=(self.seed & _MASK64, self.stream_id & _MASK64))
        return np.random.Generator(np.random.PCG64(ss))

    def derive(self, *children: int) -> "RandomStream":
        """Child stream keyed by one or more integers (order matters)."""
        sid = self.stream_id & _MASK64
        for c in children:
            sid = _splitmix64(sid ^ _splitmix64(c & _MASK64))
        return RandomStream(self.seed, sid)
