"""Correlation power analysis on the last AES round.

Correlations are computed from running sums.  When samples are integer valued
every sum is an exact integer, so attacking the first ``n`` traces gives the
same numbers whether they are processed in one pass or as a prefix of a
longer MTD sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .aes import SHIFT_ROWS_DST, as_block, expand_key, invert_key_schedule
from .leakage import hypothesis_values
from .traces import TraceSet

_CHUNK = 8192


class AttackError(ValueError):
    pass


def pearson(x, y) -> float:
    """Sample Pearson coefficient; 0.0 when either input has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d vectors of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    return float(np.clip((xc @ yc) / np.sqrt(sxx * syy), -1.0, 1.0))


@dataclass(frozen=True)
class CorrelationCurve:
    byte_index: int
    per_guess_max_abs_rho: np.ndarray  # (256,)
    winning_guess: int
    rho_margin: float

    @classmethod
    def from_scores(cls, p: int, scores: np.ndarray) -> "CorrelationCurve":
        win = int(np.argmax(scores))  # first maximum, i.e. lowest guess on ties
        second = np.max(np.delete(scores, win))
        return cls(byte_index=p, per_guess_max_abs_rho=scores, winning_guess=win,
                   rho_margin=float(scores[win] - second))

    def rank_of(self, guess: int) -> int:
        """1-based rank of ``guess`` (ties resolved towards lower guess values)."""
        s = self.per_guess_max_abs_rho
        better = np.sum(s > s[guess]) + np.sum((s == s[guess]) & (np.arange(256) < guess))
        return int(better) + 1


@dataclass
class AttackReport:
    recovered_round10_key: np.ndarray
    recovered_master_key: np.ndarray
    curves: list[CorrelationCurve]
    n_traces: int
    bytes_correct: int | None = None
    mtd: int | None = None
    per_byte_mtd: list[int | None] | None = None
    trial_seed: int | None = None
    use_window: bool = False


class _Sums:
    """Running sums for all 16 bytes x 256 guesses against the selected sample columns."""

    def __init__(self, n_cols: int, integer: bool):
        self.n = 0
        self.integer = integer
        self.sh = np.zeros((16, 256))
        self.shh = np.zeros((16, 256))
        self.st = np.zeros(n_cols)
        self.stt = np.zeros(n_cols)
        self.sht = np.zeros((16, 256, n_cols))

    def add(self, cts: np.ndarray, t: np.ndarray) -> None:
        if cts.shape[0] == 0:
            return
        h = np.stack([hypothesis_values(cts, p) for p in range(16)], axis=1)  # (m, 16, 256)
        dtype = np.float32 if self.integer else np.float64
        hf = h.reshape(h.shape[0], -1).astype(dtype)
        self.sht += (hf.T @ t.astype(dtype)).astype(np.float64).reshape(16, 256, -1)
        h64 = h.astype(np.float64)
        self.sh += h64.sum(axis=0)
        self.shh += (h64 * h64).sum(axis=0)
        t64 = t.astype(np.float64)
        self.st += t64.sum(axis=0)
        self.stt += (t64 * t64).sum(axis=0)
        self.n += cts.shape[0]

    def scores(self) -> np.ndarray:
        """max over columns of |rho|, shape (16, 256)."""
        n = self.n
        vh = n * self.shh - self.sh ** 2
        vt = n * self.stt - self.st ** 2
        cov = n * self.sht - self.sh[..., None] * self.st
        denom = np.sqrt(np.maximum(vh, 0.0)[..., None] * np.maximum(vt, 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = np.where(denom > 0, cov / denom, 0.0)
        return np.abs(np.clip(rho, -1.0, 1.0)).max(axis=-1)


def _columns(traces: TraceSet, use_window: bool) -> np.ndarray:
    if use_window:
        if traces.window is None:
            raise AttackError("windowed attack requested but the trace set has no window")
        a, b = traces.window
        cols = traces.samples[:, a:b]
    else:
        cols = traces.samples
    cols = cols.astype(np.float64)
    if traces.polarity:
        cols = -cols
    return cols


def _accumulate(traces: TraceSet, use_window: bool, stops: list[int]):
    """Yield (n, scores) at each requested prefix length."""
    cols = _columns(traces, use_window)
    peak = float(np.abs(cols).max(initial=0.0))
    integer = bool(np.all(cols == np.rint(cols))) and peak <= 2 ** 16
    # float32 chunk products stay exact below 2**24
    chunk = max(1, min(_CHUNK, 2 ** 24 // (8 * int(peak) + 1))) if integer else _CHUNK
    sums = _Sums(cols.shape[1], integer)
    prev = 0
    for stop in stops:
        for lo in range(prev, stop, chunk):
            hi = min(lo + chunk, stop)
            sums.add(traces.ciphertexts[lo:hi], cols[lo:hi])
        prev = stop
        yield stop, sums.scores()


def _scores(traces: TraceSet, use_window: bool) -> np.ndarray:
    if traces.n_traces < 2:
        raise AttackError("need at least two traces")
    (_, scores), = _accumulate(traces, use_window, [traces.n_traces])
    return scores


def attack_byte(traces: TraceSet, p: int, use_window: bool = False) -> CorrelationCurve:
    """Correlation curve for register byte ``p``; the guess targets round-10 key byte ``SHIFT_ROWS_DST[p]``."""
    return CorrelationCurve.from_scores(p, _scores(traces, use_window)[p])


def _assemble(scores: np.ndarray) -> tuple[np.ndarray, list[CorrelationCurve]]:
    curves = [CorrelationCurve.from_scores(p, scores[p]) for p in range(16)]
    k10 = np.zeros(16, dtype=np.uint8)
    for p, c in enumerate(curves):
        k10[SHIFT_ROWS_DST[p]] = c.winning_guess
    return k10, curves


def recover_key(traces: TraceSet, use_window: bool = False, true_key=None) -> AttackReport:
    k10, curves = _assemble(_scores(traces, use_window))
    report = AttackReport(recovered_round10_key=k10, recovered_master_key=invert_key_schedule(k10),
                          curves=curves, n_traces=traces.n_traces, use_window=use_window)
    if true_key is not None:
        report.bytes_correct = int(np.sum(k10 == expand_key(true_key).round_keys[10]))
    return report


@dataclass
class MtdResult:
    mtd: int | None
    per_byte_mtd: list[int | None]
    grid: list[int]
    # (len(grid), 16): correct-guess score, best wrong score, correctness
    correct_rho: np.ndarray = field(repr=False)
    best_wrong_rho: np.ndarray = field(repr=False)
    correct: np.ndarray = field(repr=False)
    final_report: AttackReport | None = field(default=None, repr=False)

    @property
    def reached(self) -> bool:
        return self.mtd is not None

    def bytes_correct_at_end(self) -> int:
        return int(self.correct[-1].sum()) if len(self.grid) else 0


def mtd_grid(n: int, step: int) -> list[int]:
    if step < 1:
        raise ValueError("step must be >= 1")
    grid = [k for k in range(step, n + 1, step) if k >= 2]
    if n >= 2 and (not grid or grid[-1] != n):
        grid.append(n)
    return grid


def compute_mtd(traces: TraceSet, true_key, step: int = 100, use_window: bool = False) -> MtdResult:
    """Smallest tested trace count from which each byte stays correct at every larger tested count."""
    key = as_block(true_key)
    k10 = expand_key(key).round_keys[10]
    target = k10[SHIFT_ROWS_DST]  # correct guess per register byte
    grid = mtd_grid(traces.n_traces, step)
    correct = np.zeros((len(grid), 16), dtype=bool)
    crho = np.zeros((len(grid), 16))
    wrho = np.zeros((len(grid), 16))
    last_scores = None
    for gi, (_, scores) in enumerate(_accumulate(traces, use_window, grid)):
        winners = scores.argmax(axis=1)
        correct[gi] = winners == target
        crho[gi] = scores[np.arange(16), target]
        masked = scores.copy()
        masked[np.arange(16), target] = -1.0
        wrho[gi] = masked.max(axis=1)
        last_scores = scores
    per_byte: list[int | None] = []
    for b in range(16):
        col = correct[:, b]
        if len(grid) == 0 or not col[-1]:
            per_byte.append(None)
            continue
        wrong = np.flatnonzero(~col)
        per_byte.append(grid[wrong[-1] + 1] if wrong.size else grid[0])
    mtd = None if any(m is None for m in per_byte) else max(per_byte)
    final = None
    if last_scores is not None:
        r10, curves = _assemble(last_scores)
        # report bytes in round-key order
        final = AttackReport(recovered_round10_key=r10, recovered_master_key=invert_key_schedule(r10),
                             curves=curves, n_traces=traces.n_traces, use_window=use_window,
                             bytes_correct=int(np.sum(r10 == k10)), mtd=mtd,
                             per_byte_mtd=[per_byte[int(np.flatnonzero(SHIFT_ROWS_DST == q)[0])] for q in range(16)])
    return MtdResult(mtd=mtd, per_byte_mtd=per_byte, grid=grid, correct_rho=crho, best_wrong_rho=wrho,
                     correct=correct, final_report=final)


@dataclass
class RepeatabilityResult:
    success_rate: float
    mtds: list[int | None]
    per_sensor_mtds: list[list[int | None]]
    trial_seeds: list[int]
    bytes_recovered: list[int]

    def finite_mtds(self) -> list[int]:
        return [m for m in self.mtds if m is not None]

    def median_mtd(self) -> float:
        """Median with unreached trials counted as infinite."""
        vals = sorted(float("inf") if m is None else m for m in self.mtds)
        k = len(vals)
        return vals[k // 2] if k % 2 else 0.5 * (vals[k // 2 - 1] + vals[k // 2])


def best_of(mtds: list[int | None]) -> int | None:
    finite = [m for m in mtds if m is not None]
    return min(finite) if finite else None


def run_trial(scenario, key, budget: int, seed: int, *, step: int = 100, use_window: bool = True,
              sensors: list[int] | None = None) -> tuple[int | None, list[int | None], int]:
    """One synthesis + MTD evaluation.  Returns (best MTD, per-sensor MTDs, best bytes correct)."""
    from .synth import synthesize_traces

    sets = synthesize_traces(scenario, key, budget, seed)
    sensors = list(range(len(sets))) if sensors is None else sensors
    per = []
    best_bytes = 0
    for s in sensors:
        res = compute_mtd(sets[s], key, step=step, use_window=use_window)
        per.append(res.mtd)
        best_bytes = max(best_bytes, res.bytes_correct_at_end())
    return best_of(per), per, best_bytes


def repeatability(scenario, key, trials: int, budget: int, *, seed: int = 0, step: int = 100,
                  use_window: bool = True, sensors: list[int] | None = None) -> RepeatabilityResult:
    """Independent trials (derived seeds); success means all 16 bytes stably recovered within budget."""
    if trials < 1:
        raise ValueError("need at least one trial")
    seeds = [rngmod.derive_seed(seed, "trial", t) for t in range(trials)]
    mtds, per_sensor, recovered = [], [], []
    for s in seeds:
        if budget < 2:
            mtds.append(None)
            per_sensor.append([None] * (len(sensors) if sensors else scenario.n_sensors))
            recovered.append(0)
            continue
        best, per, nbytes = run_trial(scenario, key, budget, s, step=step, use_window=use_window, sensors=sensors)
        mtds.append(best)
        per_sensor.append(per)
        recovered.append(16 if best is not None else nbytes)
    rate = sum(m is not None for m in mtds) / trials
    return RepeatabilityResult(success_rate=rate, mtds=mtds, per_sensor_mtds=per_sensor, trial_seeds=seeds,
                               bytes_recovered=recovered)
