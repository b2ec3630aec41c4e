"""Hamming-distance leakage: true register switching and last-round hypotheses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aes import INV_SBOX, ROUNDS, SHIFT_ROWS_DST, RoundStateTrace, as_block

POPCOUNT = np.array([bin(x).count("1") for x in range(256)], dtype=np.uint8)
GUESSES = np.arange(256, dtype=np.uint8)


def hamming_distance(a: int, b: int) -> int:
    return int(POPCOUNT[(a ^ b) & 0xFF])


def last_round_hypothesis(ciphertext, p: int, guess: int) -> int:
    """HD between register byte ``p`` before and after the last round, under a key guess.

    The guess targets the round-10 key byte at ``SHIFT_ROWS_DST[p]``.
    """
    ct = as_block(ciphertext)
    q = SHIFT_ROWS_DST[p]
    before = INV_SBOX[ct[q] ^ guess]
    return hamming_distance(int(ct[p]), int(before))


@dataclass(frozen=True)
class HypothesisMatrix:
    byte_index: int
    values: np.ndarray  # (N, 256) uint8, entries 0..8


def hypothesis_values(ciphertexts: np.ndarray, p: int) -> np.ndarray:
    ct = np.asarray(ciphertexts, dtype=np.uint8)
    q = SHIFT_ROWS_DST[p]
    before = INV_SBOX[ct[:, q, None] ^ GUESSES[None, :]]
    return POPCOUNT[before ^ ct[:, p, None]]


def build_hypothesis_matrix(ciphertexts, p: int) -> HypothesisMatrix:
    ct = np.asarray(ciphertexts, dtype=np.uint8)
    if ct.ndim != 2 or ct.shape[0] == 0:
        raise ValueError("need at least one ciphertext")
    if not 0 <= p < 16:
        raise ValueError(f"byte index out of range: {p}")
    return HypothesisMatrix(byte_index=p, values=hypothesis_values(ct, p))


@dataclass(frozen=True)
class SwitchingProfile:
    per_cycle_per_bit: np.ndarray  # (10, 128) uint8 in {0, 1}

    def totals(self) -> np.ndarray:
        return self.per_cycle_per_bit.sum(axis=1)


def switching_bits(snapshots: np.ndarray) -> np.ndarray:
    """Bit flips between consecutive snapshots: ``(..., 11, 16)`` -> ``(..., 10, 128)``.

    Bit ``8*p + b`` is bit ``b`` (MSB first) of register byte ``p``.
    """
    diff = snapshots[..., 1:, :] ^ snapshots[..., :-1, :]
    return np.unpackbits(diff, axis=-1)


def true_switching(trace: RoundStateTrace) -> SwitchingProfile:
    bits = switching_bits(trace.snapshots)
    assert bits.shape == (ROUNDS, 128)
    return SwitchingProfile(per_cycle_per_bit=bits)
