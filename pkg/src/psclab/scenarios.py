"""Scenario descriptions and the layouts/activity sources they expand into.

A scenario file is JSON mirroring :class:`ScenarioSpec` field for field.
``schema_version`` is mandatory and unknown fields are rejected.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import Field, model_validator

from .platform import (
    FFS_PER_SLICE,
    LUTS_PER_SLICE,
    NoiseConfig,
    PdnConfig,
    PlacementGrid,
    TdcConfig,
    _Strict,
    box_of,
    ring_positions,
)

SCHEMA_VERSION = 1
N_FFS = 128
AES_LUT_COUNT = 1500
# oscillation frequency in MHz per ring-oscillator flavour
RO_FREQ_MHZ = {"single_lut": 1400.0, "flipflop_based": 284.01, "seven_inverter_chain": 1400.0 / 8}
RO_LUTS = {"single_lut": 1, "flipflop_based": 1, "seven_inverter_chain": 8}
# CEP cores differ in switching activity; only their ordering is meaningful
CEP_ACTIVITY = {"md5": (900, 0.20), "sha256": (1100, 0.22), "des3": (700, 0.18), "rsa": (1300, 0.10)}


# -- layouts ----------------------------------------------------------------

class Baseline(_Strict):
    kind: Literal["baseline"] = "baseline"


class SpreadFF(_Strict):
    kind: Literal["spread_ff"] = "spread_ff"
    spacing: int = Field(3, ge=0)


class SpreadFFLut(_Strict):
    kind: Literal["spread_ff_lut"] = "spread_ff_lut"
    ff_spacing: int = Field(3, ge=0)
    lut_spacing: int = Field(2, ge=0)


class Blocks(_Strict):
    kind: Literal["blocks"] = "blocks"
    ff_block_w: int = Field(30, gt=0)
    ff_block_h: int = Field(4, gt=0)
    lut_block_w: int = Field(30, gt=0)
    lut_block_h: int = Field(13, gt=0)
    gap_slices: int = Field(75, ge=0)


class SourceSpec(_Strict):
    kind: Literal["kalman", "processor", "cep_core"]
    input_bits: int | None = Field(None, gt=0)
    name: str | None = None
    side: Literal["below", "above", "left", "right"] = "below"
    element_count: int | None = Field(None, ge=0)
    toggle_prob: float | None = Field(None, ge=0, le=1)
    power_coeff: float | None = Field(None, ge=0)
    footprint: tuple[int, int] | None = None

    @model_validator(mode="after")
    def _kind_args(self):
        if self.kind == "kalman" and self.input_bits is None:
            raise ValueError("kalman source needs input_bits")
        if self.kind == "cep_core" and self.name not in CEP_ACTIVITY:
            raise ValueError(f"cep_core name must be one of {sorted(CEP_ACTIVITY)}")
        return self


class Neighbor(_Strict):
    kind: Literal["neighbor"] = "neighbor"
    sources: list[SourceSpec] = Field(min_length=1)


class Policy(_Strict):
    mode: Literal["always_on", "random", "sensor_feedback"] = "random"
    p: float = Field(0.5, ge=0, le=1)
    gain: float = Field(10.0, ge=0)


class ActiveFence(_Strict):
    kind: Literal["active_fence"] = "active_fence"
    ro_total: int | None = Field(None, ge=0)
    ros_per_slice: int = Field(1, ge=1, le=8)
    ro_kind: Literal["single_lut", "flipflop_based", "seven_inverter_chain"] = "single_lut"
    policy: Policy = Policy()
    fence_slices: int = Field(896, gt=0)

    @model_validator(mode="after")
    def _capacity(self):
        if self.ros_per_slice * RO_LUTS[self.ro_kind] > LUTS_PER_SLICE:
            raise ValueError("ring oscillators exceed the eight LUTs of a slice")
        if self.total > LUTS_PER_SLICE * self.slice_count:
            raise ValueError("ro_total exceeds 8 per fence slice")
        return self

    @property
    def total(self) -> int:
        return self.fence_slices * self.ros_per_slice if self.ro_total is None else self.ro_total

    @property
    def slice_count(self) -> int:
        if self.ro_total is None:
            return self.fence_slices
        return math.ceil(self.ro_total / self.ros_per_slice)


Layout = Annotated[Union[Baseline, SpreadFF, SpreadFFLut, Blocks, Neighbor, ActiveFence], Field(discriminator="kind")]


class SensorPlacement(_Strict):
    left_offset: int = Field(2, ge=1)
    right_offset: int = Field(2, ge=1)


class Capture(_Strict):
    lead_in_cycles: int = Field(1, ge=1)
    tail_cycles: int = Field(0, ge=0)

    def length(self) -> int:
        return self.lead_in_cycles + 11 + self.tail_cycles

    def window(self) -> tuple[int, int]:
        start = self.lead_in_cycles + 10
        return start, start + 1


# fine sensor used by every scenario: a long pre-delay puts ~12 taps of readout swing on the
# tenth-round switching, so single-tap width errors average out
SCENARIO_TAPS = 512
SCENARIO_PRE_DELAY = 65280
# per-tap skew (in buffer delays) standing in for automatically placed sensor primitives
AUTO_PLACEMENT_SKEW = 3.0
# electronic noise (taps) fixed by bisection on the baseline MTD band
CALIBRATED_SIGMA = 38.0


def _default_tdc() -> tuple[TdcConfig, TdcConfig]:
    return tuple(TdcConfig(tap_count=SCENARIO_TAPS, calibration_offset=SCENARIO_PRE_DELAY, skew_seed=i)
                 for i in (1, 2))


def _default_noise() -> NoiseConfig:
    return NoiseConfig(electronic_sigma=CALIBRATED_SIGMA)


class ScenarioSpec(_Strict):
    schema_version: Literal[1]
    name: str = ""
    layout: Layout = Baseline()
    sensors: SensorPlacement = SensorPlacement()
    noise: NoiseConfig = Field(default_factory=_default_noise)
    tdc: tuple[TdcConfig, ...] = Field(default_factory=_default_tdc)
    pdn: PdnConfig = PdnConfig()
    capture: Capture = Capture()
    ro_unit_power: float = Field(2.5, ge=0)
    key_register: bool = False
    grid_width: int = Field(100, gt=0)
    grid_height: int = Field(120, gt=0)

    @model_validator(mode="after")
    def _per_sensor(self):
        if len(self.tdc) != 2 or len(self.pdn.r_eff) != 2 or len(self.pdn.spatial_lambda) != 2:
            raise ValueError("exactly two sensors (left, right) are modelled")
        return self

    @property
    def n_sensors(self) -> int:
        return len(self.tdc)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical_json().encode()).digest()

    def with_field(self, path: str, value) -> "ScenarioSpec":
        """Copy with one (dotted) field replaced; bare names resolve into the layout first."""
        data = self.model_dump(mode="json")
        parts = path.split(".")
        if len(parts) == 1 and parts[0] not in data:
            parts = ["layout"] + parts
        target = data
        for key in parts[:-1]:
            if isinstance(target, list):
                key = int(key)
            elif key not in target:
                raise KeyError(f"unknown scenario field: {path}")
            target = target[key]
        last = parts[-1]
        if isinstance(target, list):
            target[int(last)] = value
        elif last in target or _optional_layout_field(self, parts):
            target[last] = value
        else:
            raise KeyError(f"unknown scenario field: {path}")
        return ScenarioSpec.model_validate(data)

    def with_tdc(self, **updates) -> "ScenarioSpec":
        """Copy with the same TDC fields replaced on every sensor."""
        data = self.model_dump(mode="json")
        for cfg in data["tdc"]:
            for k, v in updates.items():
                if k not in cfg:
                    raise KeyError(f"unknown TDC field: {k}")
                cfg[k] = v
        return ScenarioSpec.model_validate(data)

    def with_noise(self, **updates) -> "ScenarioSpec":
        data = self.model_dump(mode="json")
        for k, v in updates.items():
            if k not in data["noise"]:
                raise KeyError(f"unknown noise field: {k}")
            data["noise"][k] = v
        return ScenarioSpec.model_validate(data)

    def noiseless(self) -> "ScenarioSpec":
        return self.with_noise(electronic_sigma=0.0, temp_drift_enabled=False)


def _optional_layout_field(spec: ScenarioSpec, parts: list[str]) -> bool:
    return parts[0] == "layout" and len(parts) == 2 and parts[1] in type(spec.layout).model_fields


def load_scenario(path) -> ScenarioSpec:
    return ScenarioSpec.model_validate_json(Path(path).read_text())


def parse_scenario(text: str) -> ScenarioSpec:
    return ScenarioSpec.model_validate_json(text)


def dump_scenario(spec: ScenarioSpec) -> str:
    return json.dumps(spec.model_dump(mode="json"), indent=2) + "\n"


# -- activity sources ---------------------------------------------------------

@dataclass(frozen=True)
class ActivitySource:
    id: str
    kind: str
    element_count: int
    toggle_prob: float
    power_coeff: float

    @property
    def mean_activity(self) -> float:
        return self.element_count * self.toggle_prob


@dataclass(frozen=True)
class RoFenceConfig:
    id: str
    ro_kind: str
    ro_total: int
    policy: Policy
    unit_power: float

    @property
    def frequency_mhz(self) -> float:
        return RO_FREQ_MHZ[self.ro_kind]

    @property
    def power_per_active_ro(self) -> float:
        return self.unit_power * self.frequency_mhz / RO_FREQ_MHZ["single_lut"]


def _source_params(src: SourceSpec) -> tuple[int, float, float, tuple[int, int]]:
    if src.kind == "kalman":
        count, prob, coeff, fp = round(12.5 * src.input_bits), 0.25, 6.0, (20, 8)
    elif src.kind == "processor":
        count, prob, coeff, fp = 1600, 0.15, 2.0, (20, 16)
    else:
        (count, prob), coeff, fp = CEP_ACTIVITY[src.name], 2.0, (12, 10)
    return (
        count if src.element_count is None else src.element_count,
        prob if src.toggle_prob is None else src.toggle_prob,
        coeff if src.power_coeff is None else src.power_coeff,
        fp if src.footprint is None else src.footprint,
    )


def build_source(src: SourceSpec, sid: str) -> ActivitySource:
    count, prob, coeff, _ = _source_params(src)
    return ActivitySource(id=sid, kind=src.kind, element_count=count, toggle_prob=prob, power_coeff=coeff)


def neighbor_activity(src: ActivitySource, rng: np.random.Generator, size=None):
    """Toggles this cycle: one Bernoulli draw per element."""
    if src.element_count == 0 or src.toggle_prob == 0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    return rng.binomial(src.element_count, src.toggle_prob, size=size)


def fence_activity(cfg: RoFenceConfig, sensor_reading, rng: np.random.Generator | None,
                   calibration_midpoint: float = 64.0, size=None):
    """Number of ring oscillators enabled this cycle."""
    mode = cfg.policy.mode
    if mode == "always_on":
        return cfg.ro_total if size is None else np.full(size, cfg.ro_total, dtype=np.int64)
    if mode == "random":
        if cfg.policy.p == 0:
            return 0 if size is None else np.zeros(size, dtype=np.int64)
        return rng.binomial(cfg.ro_total, cfg.policy.p, size=size)
    err = cfg.policy.gain * (calibration_midpoint - np.asarray(sensor_reading, dtype=float))
    active = np.clip(np.rint(err), 0, cfg.ro_total).astype(np.int64)
    return int(active) if active.ndim == 0 else active


# -- layout builders ------------------------------------------------------------

@dataclass
class Scenario:
    spec: ScenarioSpec
    grid: PlacementGrid
    sources: list[ActivitySource]
    fence: RoFenceConfig | None


def _block(x0: int, y0: int, w: int, h: int) -> list[tuple[int, int]]:
    return [(x0 + i, y0 + j) for j in range(h) for i in range(w)]


def _pitched(n: int, cols: int, pitch: int, cx: float, cy: float) -> np.ndarray:
    rows = math.ceil(n / cols)
    x0 = round(cx - (cols - 1) * pitch / 2)
    y0 = round(cy - (rows - 1) * pitch / 2)
    return np.array([(x0 + (k % cols) * pitch, y0 + (k // cols) * pitch) for k in range(n)], dtype=float)


def _packed_ffs(slices: list[tuple[int, int]]) -> np.ndarray:
    per = math.ceil(N_FFS / len(slices))
    if per > FFS_PER_SLICE:
        raise ValueError("flip-flop block too small for 128 flip-flops")
    return np.array([slices[k // per] for k in range(N_FFS)], dtype=float)


def _aes_luts(cx: int, cy: int) -> list[tuple[int, int]]:
    # 20x20 slices, about half the LUTs used
    return _block(cx - 10, cy - 10, 20, 20)


def _victim(spec: ScenarioSpec) -> tuple[np.ndarray, list[tuple[int, int]]]:
    cx, cy = spec.grid_width // 2, spec.grid_height // 2
    lay = spec.layout
    if isinstance(lay, SpreadFF):
        return _pitched(N_FFS, 12, lay.spacing + 1, cx, cy), _aes_luts(cx, cy)
    if isinstance(lay, SpreadFFLut):
        ffs = _pitched(N_FFS, 12, lay.ff_spacing + 1, cx, cy)
        n_lut_slices = math.ceil(AES_LUT_COUNT / LUTS_PER_SLICE)
        luts = _pitched(n_lut_slices, 16, lay.lut_spacing + 1, cx, cy)
        taken = {tuple(p) for p in ffs}
        luts = [tuple(map(int, p)) for p in luts if tuple(p) not in taken]
        return ffs, luts
    if isinstance(lay, Blocks):
        height = lay.ff_block_h + lay.gap_slices + lay.lut_block_h
        top = cy - height // 2
        ff_slices = _block(cx - lay.ff_block_w // 2, top, lay.ff_block_w, lay.ff_block_h)
        luts = _block(cx - lay.lut_block_w // 2, top + lay.ff_block_h + lay.gap_slices, lay.lut_block_w, lay.lut_block_h)
        return _packed_ffs(ff_slices), luts
    # baseline and the defense wrappers keep the densest packing: 16 slices at the AES centre
    return _packed_ffs(_block(cx - 2, cy - 2, 4, 4)), _aes_luts(cx, cy)


def _adjacent_block(box, side: str, w: int, h: int, gap: int = 1) -> list[tuple[int, int]]:
    x0, y0, x1, y1 = box
    mx, my = (x0 + x1) // 2, (y0 + y1) // 2
    if side == "below":
        return _block(mx - w // 2, y1 + 1 + gap, w, h)
    if side == "above":
        return _block(mx - w // 2, y0 - gap - h, w, h)
    if side == "left":
        return _block(x0 - gap - w, my - h // 2, w, h)
    return _block(x1 + 1 + gap, my - h // 2, w, h)


def make_scenario(spec: ScenarioSpec) -> Scenario:
    """Expand a spec into a placement grid plus activity sources.  No randomness."""
    ffs, luts = _victim(spec)
    aes_box = box_of(np.vstack([ffs, np.asarray(luts, float).reshape(-1, 2)]))
    neighbor_elements: list[tuple[tuple[int, int], str]] = []
    fence_elements: list[tuple[tuple[int, int], str]] = []
    sources: list[ActivitySource] = []
    fence = None
    lay = spec.layout
    if isinstance(lay, Neighbor):
        box = aes_box
        for i, src in enumerate(lay.sources):
            sid = f"{src.kind}{i}"
            _, _, _, (w, h) = _source_params(src)
            cells = _adjacent_block(box, src.side, w, h)
            neighbor_elements += [(c, sid) for c in cells]
            sources.append(build_source(src, sid))
            all_pts = np.vstack([np.asarray(box, float).reshape(2, 2), np.asarray(cells, float)])
            box = box_of(all_pts)
    elif isinstance(lay, ActiveFence):
        k = 1
        while len(fence_elements) < lay.slice_count:
            for c in ring_positions(*aes_box, k):
                if len(fence_elements) == lay.slice_count:
                    break
                fence_elements.append((c, "fence"))
            k += 1
        fence = RoFenceConfig(id="fence", ro_kind=lay.ro_kind, ro_total=lay.total, policy=lay.policy,
                              unit_power=spec.ro_unit_power)
    pts = [ffs, np.asarray(luts, float).reshape(-1, 2)]
    pts += [np.asarray([p for p, _ in neighbor_elements + fence_elements], float).reshape(-1, 2)]
    x0, _, x1, _ = box_of(np.vstack(pts))
    sy = float(round(ffs[:, 1].mean()))
    sensors = [(float(x0 - spec.sensors.left_offset), sy), (float(x1 + spec.sensors.right_offset), sy)]
    grid = PlacementGrid(
        width=spec.grid_width,
        height=spec.grid_height,
        victim_ff_positions=ffs,
        sensor_positions=sensors,
        lut_positions=np.asarray(luts, float).reshape(-1, 2),
        neighbor_elements=neighbor_elements,
        fence_elements=fence_elements,
    )
    return Scenario(spec=spec, grid=grid, sources=sources, fence=fence)


def baseline(**overrides) -> ScenarioSpec:
    return ScenarioSpec(schema_version=SCHEMA_VERSION, name="baseline", **overrides)


def _named(name: str, layout) -> ScenarioSpec:
    return ScenarioSpec(schema_version=SCHEMA_VERSION, name=name, layout=layout)


# the experiment families as ready-made scenarios, keyed by name
PRESETS = {
    "baseline": lambda: _named("baseline", Baseline()),
    "spread_ff_2": lambda: _named("spread_ff_2", SpreadFF(spacing=2)),
    "spread_ff_3": lambda: _named("spread_ff_3", SpreadFF(spacing=3)),
    "spread_ff_6": lambda: _named("spread_ff_6", SpreadFF(spacing=6)),
    "spread_ff_lut": lambda: _named("spread_ff_lut", SpreadFFLut()),
    "blocks": lambda: _named("blocks", Blocks()),
    "kalman16": lambda: _named("kalman16", Neighbor(sources=[SourceSpec(kind="kalman", input_bits=16)])),
    "kalman48": lambda: _named("kalman48", Neighbor(sources=[SourceSpec(kind="kalman", input_bits=48)])),
    "kalman16_processor": lambda: _named("kalman16_processor", Neighbor(sources=[
        SourceSpec(kind="kalman", input_bits=16), SourceSpec(kind="processor", side="above")])),
    "fence_1": lambda: _named("fence_1", ActiveFence(ros_per_slice=1)),
    "fence_2": lambda: _named("fence_2", ActiveFence(ros_per_slice=2)),
    "fence_8": lambda: _named("fence_8", ActiveFence(ros_per_slice=8)),
    "fence_ff": lambda: _named("fence_ff", ActiveFence(ros_per_slice=1, ro_kind="flipflop_based")),
    "fence_feedback": lambda: _named("fence_feedback", ActiveFence(policy=Policy(mode="sensor_feedback"))),
}


def preset(name: str) -> ScenarioSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
