"""Trace sets and the ``PSCT`` binary container.

Layout (little-endian): magic ``PSCT``, version u16, N u32, S u16, tap_count
u16, window start u16, window end u16, sensor id u8, polarity u8, scenario
digest (32 bytes), then N*S float32 samples, N*16 plaintext bytes and N*16
ciphertext bytes.  A missing window is stored as ``0xFFFF, 0xFFFF``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

MAGIC = b"PSCT"
VERSION = 1
_HEADER = struct.Struct("<4sHIHHHHBB32s")
NO_WINDOW = 0xFFFF


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TraceSet:
    samples: np.ndarray  # (N, S) float32
    plaintexts: np.ndarray  # (N, 16) uint8
    ciphertexts: np.ndarray  # (N, 16) uint8
    window: tuple[int, int] | None
    sensor_id: int
    scenario_digest: bytes
    tap_count: int = 128
    # 1: more switching gives lower readings, so samples are negated before correlation
    polarity: int = 1

    def __post_init__(self):
        n = self.samples.shape[0]
        if self.samples.ndim != 2 or self.plaintexts.shape != (n, 16) or self.ciphertexts.shape != (n, 16):
            raise ValueError("inconsistent trace set dimensions")
        if len(self.scenario_digest) != 32:
            raise ValueError("scenario digest must be 32 bytes")
        if self.window is not None:
            a, b = self.window
            if not 0 <= a < b <= self.samples.shape[1]:
                raise ValueError(f"window {self.window} outside {self.samples.shape[1]} samples")

    @property
    def n_traces(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def head(self, n: int) -> "TraceSet":
        return replace(self, samples=self.samples[:n], plaintexts=self.plaintexts[:n], ciphertexts=self.ciphertexts[:n])

    def take(self, idx) -> "TraceSet":
        return replace(self, samples=self.samples[idx], plaintexts=self.plaintexts[idx], ciphertexts=self.ciphertexts[idx])

    def with_samples(self, samples: np.ndarray) -> "TraceSet":
        return replace(self, samples=np.asarray(samples, dtype=np.float32))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceSet):
            return NotImplemented
        return to_bytes(self) == to_bytes(other)

    __hash__ = None


def to_bytes(ts: TraceSet) -> bytes:
    if ts.n_traces > 0xFFFFFFFF or ts.n_samples > 0xFFFF:
        raise ValueError("trace set too large for the container")
    start, end = ts.window if ts.window is not None else (NO_WINDOW, NO_WINDOW)
    header = _HEADER.pack(MAGIC, VERSION, ts.n_traces, ts.n_samples, ts.tap_count, start, end,
                          ts.sensor_id, ts.polarity, ts.scenario_digest)
    return b"".join([
        header,
        np.ascontiguousarray(ts.samples, dtype="<f4").tobytes(),
        np.ascontiguousarray(ts.plaintexts, dtype=np.uint8).tobytes(),
        np.ascontiguousarray(ts.ciphertexts, dtype=np.uint8).tobytes(),
    ])


def from_bytes(data: bytes) -> TraceSet:
    if len(data) < _HEADER.size:
        raise TraceFormatError("truncated header")
    magic, version, n, s, taps, start, end, sensor, polarity, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TraceFormatError(f"unsupported format version {version}")
    expected = _HEADER.size + n * s * 4 + n * 32
    if len(data) != expected:
        raise TraceFormatError(f"expected {expected} bytes, got {len(data)}")
    off = _HEADER.size
    samples = np.frombuffer(data, dtype="<f4", count=n * s, offset=off).reshape(n, s).astype(np.float32)
    off += n * s * 4
    pts = np.frombuffer(data, dtype=np.uint8, count=n * 16, offset=off).reshape(n, 16).copy()
    off += n * 16
    cts = np.frombuffer(data, dtype=np.uint8, count=n * 16, offset=off).reshape(n, 16).copy()
    window = None if (start, end) == (NO_WINDOW, NO_WINDOW) else (start, end)
    return TraceSet(samples=samples, plaintexts=pts, ciphertexts=cts, window=window, sensor_id=sensor,
                    scenario_digest=digest, tap_count=taps, polarity=polarity)


def save(ts: TraceSet, path, *, force: bool = False) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use --force to overwrite)")
    path.write_bytes(to_bytes(ts))
    return path


def load(path) -> TraceSet:
    return from_bytes(Path(path).read_bytes())
