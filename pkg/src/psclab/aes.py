"""Iterative AES-128 with per-round register snapshots.

The model is a 128-bit iterative core: one state register rewritten once per
clock.  ``snapshots[0]`` is the register after the initial AddRoundKey and
``snapshots[i]`` the register after round ``i``; ``snapshots[10]`` is the
ciphertext.  Byte order is the FIPS-197 column-major state order, so byte
``p`` sits at row ``p % 4``, column ``p // 4``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 16
ROUNDS = 10


def _build_sbox() -> np.ndarray:
    # multiplicative inverse in GF(2^8) followed by the affine map
    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if _gmul(a, b) == 1:
                inv[a] = b
                break
    box = np.zeros(256, dtype=np.uint8)
    for x in range(256):
        b = inv[x]
        s = b
        for shift in range(1, 5):
            s ^= ((b << shift) | (b >> (8 - shift))) & 0xFF
        box[x] = s ^ 0x63
    return box


def _gmul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a = ((a << 1) ^ 0x1B) & 0xFF if a & 0x80 else a << 1
        b >>= 1
    return out


SBOX = _build_sbox()
INV_SBOX = np.zeros(256, dtype=np.uint8)
INV_SBOX[SBOX] = np.arange(256, dtype=np.uint8)

XTIME = np.array([_gmul(x, 2) for x in range(256)], dtype=np.uint8)

RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)

# new_state[p] = old_state[SHIFT_ROWS_SRC[p]]
SHIFT_ROWS_SRC = np.array([(p % 4) + 4 * (((p // 4) + (p % 4)) % 4) for p in range(16)], dtype=np.intp)
# old byte at p lands at SHIFT_ROWS_DST[p] after ShiftRows
SHIFT_ROWS_DST = np.argsort(SHIFT_ROWS_SRC)


def sbox(b: int) -> int:
    return int(SBOX[b])


def inv_sbox(b: int) -> int:
    """Inverse S-box lookup for a single octet."""
    if not 0 <= b <= 0xFF:
        raise ValueError(f"octet out of range: {b}")
    return int(INV_SBOX[b])


def shiftrows_src(p: int) -> int:
    return int(SHIFT_ROWS_SRC[p])


def shiftrows_dst(p: int) -> int:
    return int(SHIFT_ROWS_DST[p])


def as_block(data) -> np.ndarray:
    """Coerce bytes, a hex string or a sequence of ints into a 16-byte uint8 array."""
    if isinstance(data, str):
        data = bytes.fromhex(data)
    arr = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data)
    if arr.shape != (BLOCK_SIZE,):
        raise ValueError(f"a block is exactly 16 bytes, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 0xFF:
            raise ValueError("block entries must be octets")
        arr = arr.astype(np.uint8)
    return arr.copy()


@dataclass(frozen=True)
class RoundKeySchedule:
    round_keys: np.ndarray  # (11, 16) uint8

    def __post_init__(self):
        if self.round_keys.shape != (ROUNDS + 1, BLOCK_SIZE):
            raise ValueError("a schedule holds exactly 11 round keys")

    def __getitem__(self, i: int) -> np.ndarray:
        return self.round_keys[i]


@dataclass(frozen=True)
class RoundStateTrace:
    plaintext: np.ndarray
    key: np.ndarray
    snapshots: np.ndarray  # (11, 16) uint8

    @property
    def ciphertext(self) -> np.ndarray:
        return self.snapshots[ROUNDS]

    def __eq__(self, other):
        if not isinstance(other, RoundStateTrace):
            return NotImplemented
        return (
            np.array_equal(self.plaintext, other.plaintext)
            and np.array_equal(self.key, other.key)
            and np.array_equal(self.snapshots, other.snapshots)
        )

    __hash__ = None


def _sub_rot_word(word: np.ndarray) -> np.ndarray:
    return SBOX[np.roll(word, -1)]


def expand_key(master_key) -> RoundKeySchedule:
    """Standard AES-128 key expansion into 11 round keys."""
    key = as_block(master_key)
    words = [key[4 * i:4 * i + 4].copy() for i in range(4)]
    for i in range(4, 44):
        temp = words[i - 1]
        if i % 4 == 0:
            temp = _sub_rot_word(temp)
            temp = temp.copy()
            temp[0] ^= RCON[i // 4 - 1]
        words.append(words[i - 4] ^ temp)
    return RoundKeySchedule(np.concatenate(words).reshape(ROUNDS + 1, BLOCK_SIZE))


def invert_key_schedule(round10_key) -> np.ndarray:
    """Run the key schedule backward from the last round key to the master key."""
    words = [None] * 44
    last = as_block(round10_key)
    for j in range(4):
        words[40 + j] = last[4 * j:4 * j + 4].copy()
    for i in range(43, 3, -1):
        temp = words[i - 1]
        if i % 4 == 0:
            temp = _sub_rot_word(temp).copy()
            temp[0] ^= RCON[i // 4 - 1]
        words[i - 4] = words[i] ^ temp
    return np.concatenate(words[:4])


def _mix_columns(state: np.ndarray) -> np.ndarray:
    # state: (..., 16); columns are contiguous groups of 4
    s = state.reshape(state.shape[:-1] + (4, 4))
    a0, a1, a2, a3 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    total = a0 ^ a1 ^ a2 ^ a3
    out = np.empty_like(s)
    out[..., 0] = a0 ^ total ^ XTIME[a0 ^ a1]
    out[..., 1] = a1 ^ total ^ XTIME[a1 ^ a2]
    out[..., 2] = a2 ^ total ^ XTIME[a2 ^ a3]
    out[..., 3] = a3 ^ total ^ XTIME[a3 ^ a0]
    return out.reshape(state.shape)


def encrypt_batch(plaintexts: np.ndarray, key) -> np.ndarray:
    """Encrypt ``(N, 16)`` plaintexts, returning ``(N, 11, 16)`` register snapshots."""
    pts = np.asarray(plaintexts, dtype=np.uint8)
    if pts.ndim != 2 or pts.shape[1] != BLOCK_SIZE:
        raise ValueError("plaintexts must have shape (N, 16)")
    rk = expand_key(key).round_keys
    out = np.empty((pts.shape[0], ROUNDS + 1, BLOCK_SIZE), dtype=np.uint8)
    state = pts ^ rk[0]
    out[:, 0] = state
    for r in range(1, ROUNDS + 1):
        state = SBOX[state][:, SHIFT_ROWS_SRC]
        if r != ROUNDS:
            state = _mix_columns(state)
        state = state ^ rk[r]
        out[:, r] = state
    return out


def encrypt_with_trace(plaintext, key) -> RoundStateTrace:
    pt = as_block(plaintext)
    k = as_block(key)
    snaps = encrypt_batch(pt[None, :], k)[0]
    return RoundStateTrace(plaintext=pt, key=k, snapshots=snaps)


def encrypt(plaintext, key) -> np.ndarray:
    return encrypt_with_trace(plaintext, key).ciphertext
