"""Counter-based random streams for reproducible Monte-Carlo runs.

Every stochastic routine in this package draws from a :class:`Rng`, a thin
(seed, stream) pair on top of numpy's Philox bit generator.  Philox is a
counter-based generator, so equal (seed, stream) pairs reproduce the same
sample sequence bit-for-bit on every platform, and distinct streams are
statistically independent.  Monte-Carlo loops give sample ``i`` the stream
``base.substream(i)``, which makes results independent of batching and of
how work is split across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Rng:
    """Immutable handle for one deterministic random stream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if not 0 <= self.stream <= _MASK64:
            raise ValueError(f"stream must fit in 64 unsigned bits, got {self.stream}")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream.

        Calling this twice yields two generators that produce identical
        sequences; hold on to one generator when consuming a stream
        sequentially.
        """
        key = np.array([self.seed, self.stream], dtype=_U64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "Rng":
        """Derive an independent child stream, e.g. one per MC sample.

        Children are keyed by ``(seed, stream * 2**32 + index + 1)`` so that
        nested substreams of moderate fan-out never collide.
        """
        if index < 0:
            raise ValueError("substream index must be nonnegative")
        child = ((self.stream << 32) + index + 1) & _MASK64
        return Rng(self.seed, child)
