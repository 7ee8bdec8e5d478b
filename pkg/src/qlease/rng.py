"""Seeded, counter-based randomness streams.

Every experiment derives its generators from a 64-bit master seed and an
integer stream id, so trial ``i`` always sees the same stream regardless of
execution order.
"""
from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64-10"

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return the generator for substream ``stream`` of master ``seed``."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_seed(rng: np.random.Generator) -> int:
    """Draw a fresh 63-bit seed, used as recorded obfuscation randomness."""
    return int(rng.integers(0, 1 << 63))


def draw_bits(rng: np.random.Generator, nbits: int) -> int:
    """Uniform integer in ``[0, 2**nbits)`` for arbitrary ``nbits``."""
    if nbits <= 0:
        return 0
    nbytes = (nbits + 7) // 8
    raw = int.from_bytes(rng.bytes(nbytes), "big")
    return raw >> (8 * nbytes - nbits)


def draw_bytes(rng: np.random.Generator, nbytes: int) -> bytes:
    return rng.bytes(nbytes)
