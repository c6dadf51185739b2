"""Portable seeded random number generation.

All dataset sampling runs on SplitMix64 so that any implementation of the
same 64-bit algorithm reproduces our streams bit-for-bit. The update and
output mixing constants follow Steele, Lea & Flood (2014); the README
documents the exact recipe for re-implementers.

Derived values are produced without float-dependent shortcuts:

- ``randint`` draws 64-bit words and rejects values that would introduce
  modulo bias, so integer streams are identical on any platform.
- ``random`` maps the top 53 bits onto [0, 1).
- ``shuffle`` is a Fisher-Yates pass driven by ``randint``.

Child seeds are derived with SHA-256 over ``"<seed>:<label>"`` so that
independent parts of a pipeline get independent, collision-free streams.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def derive_seed(seed: int, label: str) -> int:
    """Stable 64-bit child seed from a parent seed and a stream label."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class SeededRng:
    """SplitMix64 stream with the derived samplers the pipeline needs."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], inclusive, bias-free via rejection."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        n = hi - lo + 1
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return lo + (u % n)

    def choice(self, seq):
        if not seq:
            raise ValueError("choice from empty sequence")
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def sample(self, seq, k: int) -> list:
        if k > len(seq):
            raise ValueError(f"sample of {k} from {len(seq)} items")
        pool = list(seq)
        self.shuffle(pool)
        return pool[:k]

    def spawn(self, label: str) -> "SeededRng":
        """Independent child stream; advances this stream by one draw."""
        return SeededRng(derive_seed(self.next_u64(), label))
