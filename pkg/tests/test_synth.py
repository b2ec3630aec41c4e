import time

import numpy as np
import pytest

from psclab.aes import encrypt_batch, expand_key
from psclab.leakage import POPCOUNT
from psclab.platform import aggregate_power, round_half_away, voltage_from_power
from psclab.scenarios import baseline, make_scenario, preset
from psclab.synth import cycle_flips, sensor_setup, synthesize_traces, temperature_drift


def spearman(a, b):
    # average ranks for ties
    def avg_rank(x):
        order = np.argsort(x, kind="stable")
        r = np.empty(len(x))
        xs = x[order]
        i = 0
        while i < len(x):
            j = i
            while j + 1 < len(x) and xs[j + 1] == xs[i]:
                j += 1
            r[order[i:j + 1]] = 0.5 * (i + j)
            i = j + 1
        return r
    return np.corrcoef(avg_rank(np.asarray(a, float)), avg_rank(np.asarray(b, float)))[0, 1]


def test_shapes_window_and_ciphertexts(fips_key):
    sets = synthesize_traces(baseline(), fips_key, 50, 1)
    assert len(sets) == 2
    for sid, ts in enumerate(sets):
        assert ts.samples.shape == (50, 12) and ts.samples.dtype == np.float32
        assert ts.window == (11, 12) and ts.sensor_id == sid
        assert ts.scenario_digest == baseline().digest()
        assert np.array_equal(ts.ciphertexts, encrypt_batch(ts.plaintexts, fips_key)[:, 10])
        assert ts.samples.min() >= 0 and ts.samples.max() <= ts.tap_count
        assert np.array_equal(ts.samples, np.round(ts.samples))


def test_single_trace_matches_hand_chained_pipeline(fips_key):
    spec = baseline().noiseless()
    scen = make_scenario(spec)
    for seed in range(5):
        sets = synthesize_traces(spec, fips_key, 1, seed)
        snaps = encrypt_batch(sets[0].plaintexts, fips_key)
        flips = cycle_flips(snaps)[0]
        for sid, ts in enumerate(sets):
            lam = spec.pdn.spatial_lambda[sid]
            p = aggregate_power(flips[10], scen.grid, sid, lam=lam, static_floor=spec.pdn.static_floor)
            v = voltage_from_power(p, spec.pdn.v_nominal, spec.pdn.r_eff[sid])
            assert ts.samples[0, 11] == sensor_setup(scen, sid).raw(v)


def test_determinism(fips_key):
    for name in ("baseline", "fence_1", "kalman16_processor"):
        a = synthesize_traces(preset(name), fips_key, 300, 9)
        b = synthesize_traces(preset(name), fips_key, 300, 9)
        assert all(x == y for x, y in zip(a, b))
    c = synthesize_traces(baseline(), fips_key, 300, 10)
    assert not np.array_equal(a[0].plaintexts, c[0].plaintexts)


def test_prefix_independence(fips_key):
    spec = preset("fence_2").with_noise(temp_drift_enabled=True)
    long = synthesize_traces(spec, fips_key, 400, 5)
    short = synthesize_traces(spec, fips_key, 150, 5)
    for a, b in zip(long, short):
        assert a.head(150) == b


def test_anti_correlation_noiseless(fips_key):
    sets = synthesize_traces(baseline().noiseless(), fips_key, 1000, 3)
    snaps = encrypt_batch(sets[0].plaintexts, fips_key)
    flips = POPCOUNT[snaps[:, 9] ^ snaps[:, 10]].sum(axis=1)
    for ts in sets:
        assert spearman(flips, ts.samples[:, 11]) <= -0.99


def test_drift_is_additive_and_bounded(fips_key):
    spec = baseline().with_noise(electronic_sigma=0.0, temp_drift_rate=200.0, temp_ceiling=30.0)
    off = synthesize_traces(spec, fips_key, 2000, 4)
    on = synthesize_traces(spec.with_noise(temp_drift_enabled=True), fips_key, 2000, 4)
    for sid, (a, b) in enumerate(zip(off, on)):
        drift = temperature_drift(4, sid, 2000, 200.0, 30.0)
        assert np.abs(drift).max() <= 30.0
        expect = np.clip(a.samples + round_half_away(drift)[:, None], 0, a.tap_count)
        assert np.array_equal(b.samples, expect)
    # switching drift off again restores the drift-free output bit for bit
    again = synthesize_traces(spec.with_noise(temp_drift_enabled=False), fips_key, 2000, 4)
    assert all(x == y for x, y in zip(off, again))


def test_zero_skew_configs_are_identical(fips_key):
    a = synthesize_traces(baseline().with_tdc(skew_seed=3), fips_key, 100, 1)
    b = synthesize_traces(baseline().with_tdc(skew_seed=8), fips_key, 100, 1)
    assert np.array_equal(a[0].samples, b[0].samples)


def test_skew_changes_readout(fips_key):
    a = synthesize_traces(baseline().noiseless(), fips_key, 200, 1)
    b = synthesize_traces(baseline().noiseless().with_tdc(tap_skew_sigma=3.0), fips_key, 200, 1)
    assert not np.array_equal(a[0].samples, b[0].samples)


def test_fence_adds_variance(fips_key):
    quiet = synthesize_traces(baseline().noiseless(), fips_key, 1000, 2)
    loud = synthesize_traces(preset("fence_8").noiseless(), fips_key, 1000, 2)
    assert loud[0].samples[:, 0].std() > quiet[0].samples[:, 0].std() + 5


def test_feedback_fence_runs(fips_key):
    sets = synthesize_traces(preset("fence_feedback"), fips_key, 200, 2)
    assert sets[0].samples.shape == (200, 12)


def test_key_register_option_adds_switching(fips_key):
    snaps = encrypt_batch(np.zeros((3, 16), np.uint8), fips_key)
    plain = cycle_flips(snaps)
    withkey = cycle_flips(snaps, key_register=True, key=fips_key)
    rk = expand_key(fips_key).round_keys
    assert (withkey.sum(axis=-1) - plain.sum(axis=-1))[0, 10] == POPCOUNT[rk[10] ^ rk[9]].sum()


def test_invalid_arguments(fips_key):
    with pytest.raises(ValueError):
        synthesize_traces(baseline(), fips_key, 0, 1)
    with pytest.raises(ValueError):
        synthesize_traces(baseline(), fips_key, 10, -1)


def test_5000_traces_runtime(fips_key):
    t0 = time.perf_counter()
    synthesize_traces(baseline(), fips_key, 5000, 1)
    assert time.perf_counter() - t0 < 60
