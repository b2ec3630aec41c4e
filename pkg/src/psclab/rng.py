"""Seed derivation.  Every random draw comes from ``(seed, purpose, index)``."""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def seed_sequence(seed: int, purpose: str, index: int = 0) -> np.random.SeedSequence:
    seed = check_seed(seed)
    tag = zlib.crc32(purpose.encode())
    return np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, tag, int(index)])


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, purpose, index)))


def derive_seed(seed: int, purpose: str, index: int = 0) -> int:
    """A child 64-bit seed, e.g. one per repeatability trial."""
    return int(seed_sequence(seed, purpose, index).generate_state(1, dtype=np.uint64)[0])
