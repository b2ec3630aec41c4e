"""Trace synthesis: AES switching -> sensor power -> IR drop -> TDC readout."""

from __future__ import annotations

import numpy as np

from . import rng as rngmod
from .aes import as_block, encrypt_batch, expand_key
from .leakage import switching_bits
from .platform import TdcSensor, round_half_away, voltage_from_power
from .scenarios import Scenario, ScenarioSpec, fence_activity, make_scenario, neighbor_activity
from .traces import TraceSet

CHUNK = 4096


def cycle_flips(snapshots: np.ndarray, key_register: bool = False, key=None) -> np.ndarray:
    """Per-bit flips for the 11 AES clocks: register load from reset, then 10 rounds.

    Returns ``(N, 11, 128)`` uint8.
    """
    n = snapshots.shape[0]
    load = np.unpackbits(snapshots[:, :1, :], axis=-1)
    flips = np.concatenate([load, switching_bits(snapshots)], axis=1)
    if key_register:
        rk = expand_key(key).round_keys
        kflips = np.concatenate([np.unpackbits(rk[:1], axis=-1), np.unpackbits(rk[1:] ^ rk[:-1], axis=-1)])
        flips = flips + np.broadcast_to(kflips, (n,) + kflips.shape)
    return flips


def _draw_trace_randomness(seed: int, n: int, scen: Scenario, s_len: int):
    """Per-trace draws, each trace from its own ``(seed, "trace", i)`` stream."""
    n_src = len(scen.sources)
    n_sens = scen.spec.n_sensors
    random_fence = scen.fence is not None and scen.fence.policy.mode == "random"
    pts = np.empty((n, 16), dtype=np.uint8)
    acts = np.zeros((n, n_src, s_len), dtype=np.int64)
    fence = np.zeros((n, s_len), dtype=np.int64)
    noise = np.empty((n, n_sens, s_len), dtype=np.float64)
    for i in range(n):
        g = rngmod.stream(seed, "trace", i)
        pts[i] = g.integers(0, 256, 16, dtype=np.uint8)
        noise[i] = g.standard_normal((n_sens, s_len))
        for j, src in enumerate(scen.sources):
            acts[i, j] = neighbor_activity(src, g, size=s_len)
        if random_fence:
            fence[i] = fence_activity(scen.fence, None, g, size=s_len)
    return pts, acts, fence, noise


def temperature_drift(seed: int, sensor: int, n: int, rate: float, ceiling: float) -> np.ndarray:
    """Per-trace baseline offset (taps): a random walk reflected into ``[-ceiling, ceiling]``."""
    steps = rngmod.stream(seed, "drift", sensor).normal(0.0, rate / np.sqrt(1000.0), n)
    out = np.empty(n)
    x = 0.0
    for i, s in enumerate(steps):
        x += s
        if ceiling > 0:
            while abs(x) > ceiling:
                x = np.sign(x) * 2 * ceiling - x
        else:
            x = 0.0
        out[i] = x
    return out


def idle_power(scen: Scenario, sensor: int) -> float:
    spec = scen.spec
    lam = spec.pdn.spatial_lambda[sensor]
    p = spec.pdn.static_floor
    for src in scen.sources:
        p += src.mean_activity * src.power_coeff * scen.grid.source_weight(src.id, sensor, lam)
    if scen.fence is not None and scen.fence.policy.mode != "sensor_feedback":
        f = scen.fence
        mean = f.ro_total * (1.0 if f.policy.mode == "always_on" else f.policy.p)
        p += mean * f.power_per_active_ro * scen.grid.source_weight("fence", sensor, lam)
    return p


def sensor_setup(scen: Scenario, sensor: int) -> TdcSensor:
    """TDC calibrated so the idle operating point reads mid-scale."""
    pdn = scen.spec.pdn
    v_idle = voltage_from_power(idle_power(scen, sensor), pdn.v_nominal, pdn.r_eff[sensor])
    return TdcSensor(scen.spec.tdc[sensor], pdn.v_nominal, v_cal=v_idle)


def synthesize_traces(spec: ScenarioSpec, key, n: int, seed: int) -> list[TraceSet]:
    """Simulate ``n`` encryptions observed by every sensor; one TraceSet per sensor."""
    if n < 1:
        raise ValueError("need at least one trace")
    seed = rngmod.check_seed(seed)
    key = as_block(key)
    scen = make_scenario(spec)
    cap = spec.capture
    s_len = cap.length()
    aes0 = cap.lead_in_cycles
    pts, acts, fence_draw, z = _draw_trace_randomness(seed, n, scen, s_len)
    snaps = encrypt_batch(pts, key)
    cts = snaps[:, -1].copy()
    pdn = spec.pdn
    out = []
    sensors = [sensor_setup(scen, s) for s in range(spec.n_sensors)]
    for sid, tdc in enumerate(sensors):
        lam = pdn.spatial_lambda[sid]
        w = scen.grid.victim_weights(sid, lam)
        power = np.full((n, s_len), pdn.static_floor)
        for lo in range(0, n, CHUNK):
            hi = min(lo + CHUNK, n)
            flips = cycle_flips(snaps[lo:hi], spec.key_register, key)
            power[lo:hi, aes0:aes0 + 11] += flips.astype(np.float64) @ w
        for j, src in enumerate(scen.sources):
            power += acts[:, j] * (src.power_coeff * scen.grid.source_weight(src.id, sid, lam))
        raw = _readout_with_fence(scen, sid, tdc, power, fence_draw, lam)
        extra = spec.noise.electronic_sigma * z[:, sid]
        if spec.noise.temp_drift_enabled:
            extra = extra + temperature_drift(seed, sid, n, spec.noise.temp_drift_rate, spec.noise.temp_ceiling)[:, None]
        taps = spec.tdc[sid].tap_count
        samples = np.clip(raw + round_half_away(extra), 0, taps).astype(np.float32)
        out.append(TraceSet(samples=samples, plaintexts=pts.copy(), ciphertexts=cts.copy(), window=cap.window(),
                            sensor_id=sid, scenario_digest=spec.digest(), tap_count=taps, polarity=1))
    return out


def _readout_with_fence(scen: Scenario, sid: int, tdc: TdcSensor, power: np.ndarray,
                        fence_draw: np.ndarray, lam: float) -> np.ndarray:
    pdn = scen.spec.pdn
    fence = scen.fence
    if fence is None:
        return tdc.raw(voltage_from_power(power, pdn.v_nominal, pdn.r_eff[sid]))
    fw = fence.power_per_active_ro * scen.grid.source_weight("fence", sid, lam)
    if fence.policy.mode != "sensor_feedback":
        if fence.policy.mode == "always_on":
            active = fence_activity(fence, None, None, size=power.shape)
        else:
            active = fence_draw
        return tdc.raw(voltage_from_power(power + active * fw, pdn.v_nominal, pdn.r_eff[sid]))
    # the defender's own sensor sits at the victim centroid and drives the fence one cycle late
    return _feedback_readout(scen, sid, tdc, power, fw)


def _feedback_readout(scen: Scenario, sid: int, tdc: TdcSensor, power: np.ndarray, fw: float) -> np.ndarray:
    pdn = scen.spec.pdn
    fence = scen.fence
    grid = scen.grid
    lam = pdn.spatial_lambda[0]
    # defender sensor: same TDC design, zero skew, placed at the victim centroid
    centroid = grid.victim_ff_positions.mean(axis=0)
    w_self = np.exp(-np.hypot(*(grid.victim_ff_positions - centroid).T) / lam).mean()
    w_att = grid.victim_weights(sid, lam).mean()
    w_fence_def = np.exp(-np.hypot(*(grid.footprint("fence") - centroid).T) / lam).mean()
    defender = TdcSensor(scen.spec.tdc[0].model_copy(update={"tap_skew_sigma": 0.0}), pdn.v_nominal,
                         v_cal=voltage_from_power(pdn.static_floor, pdn.v_nominal, pdn.r_eff[0]))
    victim_part = (power - pdn.static_floor) * (w_self / w_att)
    mid = scen.spec.tdc[0].midscale
    raw = np.empty(power.shape, dtype=np.int64)
    active = np.zeros(power.shape[0], dtype=np.int64)
    for t in range(power.shape[1]):
        raw[:, t] = tdc.raw(voltage_from_power(power[:, t] + active * fw, pdn.v_nominal, pdn.r_eff[sid]))
        own = pdn.static_floor + victim_part[:, t] + active * fence.power_per_active_ro * w_fence_def
        reading = defender.raw(voltage_from_power(own, pdn.v_nominal, pdn.r_eff[0]))
        active = fence_activity(fence, reading, None, calibration_midpoint=mid)
    return raw
