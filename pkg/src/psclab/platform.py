"""Placement geometry, PDN voltage drop and TDC sensor model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

FFS_PER_SLICE = 8
LUTS_PER_SLICE = 8


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TdcConfig(_Strict):
    """Carry-chain TDC parameters.

    ``calibration_offset`` is the coarse pre-delay (in buffer units) the clock
    edge crosses before reaching the observed taps; a longer pre-delay makes
    the readout more sensitive to supply voltage.  ``skew_seed`` fixes the
    per-tap mismatch vector, so two sensors built from equal configs share it.
    """

    tap_count: int = Field(128, gt=0, multiple_of=4)
    nominal_buffer_delay: float = Field(1.0, gt=0)
    observation_fraction: float = Field(0.5, gt=0, lt=1)
    tap_skew_sigma: float = Field(0.0, ge=0)
    calibration_offset: int = Field(0, ge=0)
    skew_seed: int = Field(0, ge=0)

    @property
    def midscale(self) -> int:
        m = round(self.tap_count * self.observation_fraction)
        return min(max(m, self.tap_count // 4), 3 * self.tap_count // 4)


class NoiseConfig(_Strict):
    electronic_sigma: float = Field(0.0, ge=0)
    temp_drift_enabled: bool = False
    # tap units of random-walk spread accumulated per 1000 traces
    temp_drift_rate: float = Field(64.0, ge=0)
    temp_ceiling: float = Field(160.0, ge=0)


class PdnConfig(_Strict):
    v_nominal: float = Field(1.0, gt=0)
    static_floor: float = Field(200.0, ge=0)
    # per sensor: volts per power unit and attenuation length in slices
    r_eff: tuple[float, ...] = (5e-5, 5e-5)
    spatial_lambda: tuple[float, ...] = (20.0, 20.0)

    @model_validator(mode="after")
    def _positive(self):
        if any(r <= 0 for r in self.r_eff) or any(lam <= 0 for lam in self.spatial_lambda):
            raise ValueError("r_eff and spatial_lambda must be positive")
        return self


def spatial_weight(distance, lam: float):
    """Exponential attenuation of switching power with distance (slice units)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    w = np.exp(-d / lam)
    return float(w) if w.ndim == 0 else w


@dataclass
class PlacementGrid:
    width: int
    height: int
    victim_ff_positions: np.ndarray  # (128, 2)
    sensor_positions: list[tuple[float, float]]
    lut_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    # (position, source id) / (position, ro config id); one entry per slice
    neighbor_elements: list[tuple[tuple[int, int], str]] = field(default_factory=list)
    fence_elements: list[tuple[tuple[int, int], str]] = field(default_factory=list)

    def __post_init__(self):
        self.victim_ff_positions = np.asarray(self.victim_ff_positions, dtype=float).reshape(-1, 2)
        self.lut_positions = np.asarray(self.lut_positions, dtype=float).reshape(-1, 2)
        self.validate()

    def validate(self) -> None:
        pts = [self.victim_ff_positions, self.lut_positions, np.asarray(self.sensor_positions, float).reshape(-1, 2)]
        pts += [np.asarray([p for p, _ in self.neighbor_elements], float).reshape(-1, 2)]
        pts += [np.asarray([p for p, _ in self.fence_elements], float).reshape(-1, 2)]
        for arr in pts:
            if arr.size and (
                arr[:, 0].min() < 0 or arr[:, 1].min() < 0
                or arr[:, 0].max() >= self.width or arr[:, 1].max() >= self.height
            ):
                raise ValueError("layout exceeds grid bounds")
        _, counts = np.unique(self.victim_ff_positions, axis=0, return_counts=True)
        if counts.size and counts.max() > FFS_PER_SLICE:
            raise ValueError("more than 8 flip-flops in one slice")

    def distances(self, positions: np.ndarray, sensor: int) -> np.ndarray:
        sx, sy = self.sensor_positions[sensor]
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        return np.hypot(pos[:, 0] - sx, pos[:, 1] - sy)

    def victim_weights(self, sensor: int, lam: float) -> np.ndarray:
        return spatial_weight(self.distances(self.victim_ff_positions, sensor), lam)

    def footprint(self, source_id: str) -> np.ndarray:
        pos = [p for p, sid in self.neighbor_elements if sid == source_id]
        pos += [p for p, sid in self.fence_elements if sid == source_id]
        if not pos:
            raise KeyError(f"unknown source id: {source_id}")
        return np.asarray(pos, dtype=float)

    def source_weight(self, source_id: str, sensor: int, lam: float) -> float:
        """Mean attenuation over a source's footprint."""
        return float(np.mean(spatial_weight(self.distances(self.footprint(source_id), sensor), lam)))


def aggregate_power(
    cycle_flips,
    grid: PlacementGrid,
    sensor: int,
    external_activity: dict[str, float] | None = None,
    *,
    power_coeff: dict[str, float] | None = None,
    lam: float = 20.0,
    static_floor: float = 0.0,
) -> float:
    """Power seen by one sensor in one cycle: weighted victim flips plus external sources."""
    flips = np.asarray(cycle_flips, dtype=float)
    if flips.shape != (grid.victim_ff_positions.shape[0],):
        raise ValueError("one flip entry per victim flip-flop")
    power = static_floor + float(flips @ grid.victim_weights(sensor, lam))
    power_coeff = power_coeff or {}
    for sid, activity in (external_activity or {}).items():
        power += activity * power_coeff.get(sid, 1.0) * grid.source_weight(sid, sensor, lam)
    return power


def voltage_from_power(power, v_nominal: float, r_eff: float):
    drop = r_eff * np.asarray(power, dtype=float)
    if np.any(drop >= v_nominal):
        raise ValueError("IR drop reaches the nominal supply (fault regime)")
    v = v_nominal - drop
    return float(v) if v.ndim == 0 else v


class TdcSensor:
    """A TDC instance: fixed tap skew plus an observation window calibrated at ``v_cal``.

    The window is placed half a tap past the mid-scale tap so that the readout
    at ``v_cal`` is exactly mid-scale with zero skew.
    """

    def __init__(self, cfg: TdcConfig, v_nominal: float = 1.0, v_cal: float | None = None):
        self.cfg = cfg
        self.v_nominal = v_nominal
        self.v_cal = v_nominal if v_cal is None else v_cal
        d = cfg.nominal_buffer_delay
        n = np.arange(1, cfg.tap_count + 1)
        self.skew = self._draw_skew(cfg)
        self.cum_skew = np.cumsum(self.skew)
        a_cal = v_nominal / self.v_cal
        m = cfg.midscale
        edge_m = a_cal * d * (cfg.calibration_offset + m) + self.cum_skew[m - 1]
        self.window = edge_m + 0.5 * (a_cal * d + self.skew[m])
        # tap n is reached iff a <= theta[n-1]; for a >= 1 every tap delay is positive, so the
        # reached taps form a prefix and the running minimum gives the same count
        theta = (self.window - self.cum_skew) / (d * (cfg.calibration_offset + n))
        self.theta = np.minimum.accumulate(theta)

    @staticmethod
    def _draw_skew(cfg: TdcConfig) -> np.ndarray:
        if cfg.tap_skew_sigma == 0:
            return np.zeros(cfg.tap_count)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.skew_seed, 0x5EE7])))
        skew = rng.normal(0.0, cfg.tap_skew_sigma * cfg.nominal_buffer_delay, cfg.tap_count)
        # delays stay positive at any voltage at or below nominal
        return np.maximum(skew, -0.9 * cfg.nominal_buffer_delay)

    @cached_property
    def _neg_theta(self) -> np.ndarray:
        return -self.theta

    def raw(self, v) -> np.ndarray:
        """Noise-free tap count for supply voltage(s) ``v``."""
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise ValueError("voltage must be positive")
        a = self.v_nominal / v
        # count of taps with theta >= a
        return np.searchsorted(self._neg_theta, -a, side="right").astype(np.int64)

    def brute_force(self, v: float) -> int:
        """Reference readout by explicit delay accumulation."""
        cfg = self.cfg
        a = self.v_nominal / v
        t = cfg.calibration_offset * cfg.nominal_buffer_delay * a
        count = 0
        for i in range(cfg.tap_count):
            t += cfg.nominal_buffer_delay * a + self.skew[i]
            if t > self.window:
                break
            count += 1
        return count


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def tdc_readout(v: float, cfg: TdcConfig, rng: np.random.Generator | None = None,
                sigma: float = 0.0, v_nominal: float = 1.0) -> int:
    if v <= 0:
        raise ValueError("voltage must be positive")
    raw = int(TdcSensor(cfg, v_nominal).raw(v))
    if sigma > 0:
        if rng is None:
            raise ValueError("noise requires a random stream")
        raw += int(round_half_away(rng.normal(0.0, sigma)))
    return min(max(raw, 0), cfg.tap_count)


def ring_positions(x0: int, y0: int, x1: int, y1: int, k: int) -> list[tuple[int, int]]:
    """Slices at Chebyshev distance ``k`` around the inclusive box, clockwise from top-left."""
    ax, ay, bx, by = x0 - k, y0 - k, x1 + k, y1 + k
    out = [(x, ay) for x in range(ax, bx + 1)]
    out += [(bx, y) for y in range(ay + 1, by + 1)]
    out += [(x, by) for x in range(bx - 1, ax - 1, -1)]
    out += [(ax, y) for y in range(by - 1, ay, -1)]
    return out


def box_of(points: np.ndarray) -> tuple[int, int, int, int]:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return (int(math.floor(pts[:, 0].min())), int(math.floor(pts[:, 1].min())),
            int(math.ceil(pts[:, 0].max())), int(math.ceil(pts[:, 1].max())))
