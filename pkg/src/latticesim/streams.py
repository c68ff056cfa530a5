"""Named, seedable RNG streams derived from a single master seed.

Every source of randomness in a run is a stream keyed by a label
(purpose plus, where relevant, a node or transaction id), so any run
is replayable from the master seed alone.
"""

import hashlib
import random

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF


def substream_seed(master_seed: int, label: str) -> int:
    """Stable 64-bit seed for a labeled substream."""
    payload = (master_seed & MASK64).to_bytes(8, "big") + label.encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


class RngStreams:
    """Factory of independent random streams keyed by label.

    ``stream`` returns a cached generator that keeps advancing across
    calls with the same label; ``fresh`` returns a brand-new generator
    every time, so two parties deriving the same label independently
    observe identical draws.
    """

    def __init__(self, master_seed: int):
        if not 0 <= master_seed <= MASK64:
            raise ValueError("master seed must fit in 64 bits")
        self.master_seed = master_seed
        self._cache: dict[str, random.Random] = {}

    @staticmethod
    def _label(parts) -> str:
        return ":".join(str(p) for p in parts)

    def stream(self, *parts) -> random.Random:
        label = self._label(parts)
        if label not in self._cache:
            self._cache[label] = random.Random(substream_seed(self.master_seed, label))
        return self._cache[label]

    def fresh(self, *parts) -> random.Random:
        return random.Random(substream_seed(self.master_seed, self._label(parts)))

    def numpy_rng(self, *parts) -> np.random.Generator:
        return np.random.default_rng(substream_seed(self.master_seed, self._label(parts)))
