"""Acceptance criteria 1-9.  Each test records a one-line measured detail; the
terminal summary prints PASS/FAIL per criterion.

Run alone with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psclab import rng as rngmod
from psclab.aes import SHIFT_ROWS_DST, encrypt_batch, expand_key, invert_key_schedule
from psclab.calibration import calibrate_sigma
from psclab.cpa import attack_byte, best_of, compute_mtd, recover_key, repeatability
from psclab.leakage import hypothesis_values, switching_bits
from psclab.platform import TdcConfig, TdcSensor
from psclab.scenarios import AUTO_PLACEMENT_SKEW, baseline, preset
from psclab.synth import synthesize_traces
from psclab.traces import load, save

pytestmark = pytest.mark.slow

KEY = np.frombuffer(bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c"), dtype=np.uint8).copy()
SEED = 2024


def _fmt(m) -> str:
    return "unreached" if m is None or (isinstance(m, float) and math.isinf(m)) else f"{m:g}"


def _mtds(res) -> str:
    return "[" + " ".join(_fmt(m) for m in res.mtds) + "]"


@pytest.mark.criterion(1)
def test_c1_noiseless_oracle_recovery(record_property):
    spec = baseline().noiseless()
    keys = rngmod.stream(SEED, "c1-keys").integers(0, 256, (20, 16), dtype=np.uint8)
    t0 = time.perf_counter()
    ok = 0
    for i, k in enumerate(keys):
        ts = synthesize_traces(spec, k, 512, rngmod.derive_seed(SEED, "c1", i))[0]
        ok += np.array_equal(recover_key(ts).recovered_master_key, k)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{ok}/20 keys exact from 512 noiseless traces, {elapsed:.1f} s")
    assert ok == 20
    assert elapsed < 30


@pytest.mark.criterion(2)
def test_c2_calibration_anchor(record_property):
    t0 = time.perf_counter()
    cal = calibrate_sigma(baseline(), KEY, band=(3900, 8100), trials=10, budget=10_000, seed=SEED)
    elapsed = time.perf_counter() - t0
    res = cal.result
    record_property("detail", f"sigma={cal.sigma:.2f} taps, median MTD {_fmt(cal.median_mtd)}, "
                              f"success {res.success_rate:.0%}, trials {_mtds(res)}, {elapsed:.0f} s")
    assert 3900 <= cal.median_mtd <= 8100
    assert res.success_rate == 1.0
    assert elapsed < 300


@pytest.mark.criterion(3)
def test_c3_temperature_drift(record_property):
    drift = repeatability(baseline().with_noise(temp_drift_enabled=True), KEY, 3, 8500, seed=SEED)
    # the 5.1k reference count is held to the stated +-50% tolerance
    still = repeatability(baseline(), KEY, 3, int(5100 * 1.5), seed=SEED)
    record_property("detail", f"drift@8.5k {_mtds(drift)} bytes {drift.bytes_recovered}; "
                              f"no drift@7.65k {_mtds(still)}")
    assert drift.success_rate < 1.0
    assert still.success_rate == 1.0


@pytest.mark.criterion(4)
def test_c4_tap_skew(record_property):
    manual = repeatability(baseline(), KEY, 5, 60_000, seed=SEED, step=500)
    auto = repeatability(baseline().with_tdc(tap_skew_sigma=AUTO_PLACEMENT_SKEW), KEY, 5, 60_000, seed=SEED, step=500)
    ratio = auto.median_mtd() / manual.median_mtd()
    record_property("detail", f"skew {_mtds(auto)} vs none {_mtds(manual)}, median ratio {ratio:.2f}")
    assert ratio >= 2.0


@pytest.mark.criterion(5)
def test_c5_windowing(record_property):
    budget = 30_000
    wins = 0
    pairs = []
    for t in range(10):
        sets = synthesize_traces(baseline(), KEY, budget, rngmod.derive_seed(SEED, "trial", t))
        full = best_of([compute_mtd(ts, KEY, step=100, use_window=False).mtd for ts in sets])
        win = best_of([compute_mtd(ts, KEY, step=100, use_window=True).mtd for ts in sets])
        f = math.inf if full is None else full
        w = math.inf if win is None else win
        wins += w <= 0.5 * f
        pairs.append(f"{_fmt(w)}/{_fmt(f)}")
    record_property("detail", f"{wins}/10 trials with window <= half of full; window/full {' '.join(pairs)}")
    assert wins >= 8


@pytest.mark.criterion(6)
def test_c6_fence_dose_response(record_property):
    med = {}
    runs = {}
    for name in ("fence_1", "fence_2", "fence_8", "fence_ff"):
        runs[name] = repeatability(preset(name), KEY, 3, 60_000, seed=SEED, step=500)
        med[name] = runs[name].median_mtd()
    record_property("detail", ", ".join(f"{n} {_fmt(med[n])} {_mtds(runs[n])}" for n in med))
    assert med["fence_8"] > med["fence_2"] > med["fence_1"]
    assert med["fence_ff"] < med["fence_1"]


@pytest.mark.criterion(7)
def test_c7_neighbor_logic(record_property):
    med = {}
    runs = {}
    for name in ("kalman16", "kalman48", "kalman16_processor"):
        runs[name] = repeatability(preset(name), KEY, 5, 60_000, seed=SEED, step=200)
        med[name] = runs[name].median_mtd()
    record_property("detail", ", ".join(f"{n} {_fmt(med[n])} {_mtds(runs[n])}" for n in med))
    assert med["kalman48"] > med["kalman16"]
    assert med["kalman16_processor"] >= med["kalman16"]


@pytest.mark.criterion(8)
def test_c8_invariant_suite(record_property, tmp_path):
    noisy = synthesize_traces(baseline(), KEY, 800, SEED)[0]
    quiet = synthesize_traces(baseline().noiseless(), KEY, 300, SEED)[1]
    checks = []

    # dyadic slopes and integer offsets keep the moved readouts exact in float32
    @settings(max_examples=40, deadline=None)
    @given(m=st.integers(1, 63), k=st.integers(0, 8), b=st.integers(-1000, 1000), negate=st.booleans())
    def affine(m, k, b, negate):
        slope = (-m if negate else m) / 2**k
        moved = quiet.with_samples(quiet.samples.astype(np.float64) * slope + b)
        for p in (0, 5, 10, 15):
            s0 = attack_byte(quiet, p).per_guess_max_abs_rho
            s1 = attack_byte(moved, p).per_guess_max_abs_rho
            assert s0.argmax() == s1.argmax()
            assert np.allclose(s0, s1, rtol=1e-9, atol=1e-12)
            gap = np.abs(s0[:, None] - s0[None, :]) > 1e-9
            assert np.all(((s0[:, None] > s0[None, :]) == (s1[:, None] > s1[None, :]))[gap])

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def permutation(seed):
        perm = np.random.default_rng(seed).permutation(noisy.n_traces)
        a, b = recover_key(noisy), recover_key(noisy.take(perm))
        for ca, cb in zip(a.curves, b.curves):
            assert np.array_equal(ca.per_guess_max_abs_rho, cb.per_guess_max_abs_rho)

    def key_schedule():
        keys = rngmod.stream(SEED, "c8-keys").integers(0, 256, (1000, 16), dtype=np.uint8)
        for k in keys:
            assert np.array_equal(invert_key_schedule(expand_key(k).round_keys[10]), k)

    @settings(max_examples=100, deadline=None)
    @given(v1=st.floats(0.05, 1.2), v2=st.floats(0.05, 1.2), skew=st.floats(0, 4),
           seed=st.integers(0, 100), taps=st.sampled_from([128, 512]))
    def tdc_monotone(v1, v2, skew, seed, taps):
        sensor = TdcSensor(TdcConfig(tap_count=taps, tap_skew_sigma=skew, calibration_offset=500, skew_seed=seed))
        lo, hi = sorted((v1, v2))
        assert sensor.raw(lo) <= sensor.raw(hi)

    def file_round_trip():
        for i, ts in enumerate((noisy, quiet)):
            path = save(ts, tmp_path / f"t{i}.psct")
            back = load(path)
            assert back == ts
            assert save(back, tmp_path / f"u{i}.psct").read_bytes() == path.read_bytes()

    def determinism():
        spec = preset("fence_feedback").with_noise(temp_drift_enabled=True)
        a = synthesize_traces(spec, KEY, 600, 77)
        b = synthesize_traces(spec, KEY, 600, 77)
        assert all(x == y for x, y in zip(a, b))
        assert synthesize_traces(spec, KEY, 600, 78)[0] != a[0]

    for fn in (affine, permutation, key_schedule, tdc_monotone, file_round_trip, determinism):
        name = getattr(fn, "__name__", "check")
        try:
            fn()
            checks.append((name, None))
        except Exception as e:  # noqa: BLE001 - every check is reported, then the test fails
            checks.append((name, e))
    failed = [n for n, e in checks if e is not None]
    record_property("detail", f"{len(checks) - len(failed)}/{len(checks)} invariant checks pass"
                              + (f", failing: {', '.join(failed)}" if failed else ""))
    assert not failed, [e for _, e in checks if e is not None]


@pytest.mark.criterion(9)
def test_c9_hypothesis_statistics(record_property):
    n = 10_000
    ct = rngmod.stream(SEED, "c9-ct").integers(0, 256, (n, 16), dtype=np.uint8)
    # the pooled 255*n wrong-guess values behave like n draws per guess; bound by 3 sigma of an n-sample mean
    mean_tol = 3 * math.sqrt(2.0 / n)
    var_tol = 3 * math.sqrt((11.0 - 2.0**2) / n)  # Binomial(8, 1/2): mu4 = 11, sigma^4 = 4
    worst_mean = worst_var = 0.0
    k10 = expand_key(KEY).round_keys[10]
    for p in range(16):
        h = hypothesis_values(ct, p).astype(np.float64)
        wrong = np.delete(h, k10[SHIFT_ROWS_DST[p]], axis=1)
        worst_mean = max(worst_mean, abs(wrong.mean() - 4.0))
        worst_var = max(worst_var, abs(wrong.var(axis=0).mean() - 2.0))

    pts = rngmod.stream(SEED, "c9-pt").integers(0, 256, (256, 16), dtype=np.uint8)
    snaps = encrypt_batch(pts, KEY)
    flips = switching_bits(snaps)[:, 9, :].reshape(256, 16, 8).sum(axis=2)
    exact = all(np.array_equal(hypothesis_values(snaps[:, 10], p)[:, k10[SHIFT_ROWS_DST[p]]], flips[:, p])
                for p in range(16))
    record_property("detail", f"max |mean-4| {worst_mean:.4f} (tol {mean_tol:.4f}), "
                              f"max |var-2| {worst_var:.4f} (tol {var_tol:.4f}), correct column exact: {exact}")
    assert worst_mean <= mean_tol
    assert worst_var <= var_tol
    assert exact


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
