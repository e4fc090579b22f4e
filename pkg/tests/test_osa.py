import math

import numpy as np
import pytest

from specthole.fiberlink import load_awgn
from specthole.osa import (OsaConfig, Psd, apply_rbw, estimate_psd, measure, osnr_out_of_band,
                           out_of_band_floor, read_band_psd, read_hole_psd)
from specthole.txgen import DualPolWaveform, HoleSpec, TxConfig, transmit
from specthole.units import dbm_to_w

FS = 130e9


def awgn(n=2**17, p_dbm=-19.0, bw=100e9, seed=1):
    w = DualPolWaveform(np.zeros((2, n), complex), FS)
    return load_awgn(w, p_dbm, bw, seed=seed)


def test_awgn_periodogram_matches_n0():
    waves = [awgn(seed=s) for s in range(5)]
    n0 = dbm_to_w(-19.0) / 100e9
    p = measure(waves, OsaConfig(rbw=1e9))
    m = np.abs(p.freq) < 45e9
    # 5 acquisitions at 1 GHz resolution: about 0.04 dB spread per reading
    db = 10 * np.log10(p.values[m] / n0)
    assert np.all(np.abs(db) <= 0.2)
    assert abs(10 * np.log10(np.mean(p.values[m]) / n0)) <= 0.02


def test_single_sweep_spread_at_osa_resolution():
    p = measure(awgn(), OsaConfig())
    m = np.abs(p.freq) < 45e9
    v = p.values[m]
    # 181 bins of 4 degrees of freedom under the 180 MHz filter
    assert np.std(v) / np.mean(v) == pytest.approx(1 / math.sqrt(2 * 181), rel=0.15)


def test_parseval_cw_tone():
    n = 4096
    k = 100
    a = 0.1
    t = np.arange(n)
    x = a * np.exp(2j * np.pi * k * t / n)
    w = DualPolWaveform(np.stack([x, np.zeros(n, complex)]), FS)
    p = estimate_psd(w, OsaConfig(rbw=None))
    assert p.integral() == pytest.approx(a**2, rel=1e-12)
    i = int(np.argmax(p.values))
    assert p.freq[i] == pytest.approx(k * FS / n)
    assert np.sum(p.values) - p.values[i] <= 1e-20 * p.values[i]


def test_psd_follows_raised_cosine_template():
    cfg = TxConfig(n_symbols=2**13, dac_bits=None)
    w, _ = transmit(cfg, 0.0)
    p = estimate_psd(w, OsaConfig(rbw=None, window_points=2**11))
    flat = np.abs(p.freq) < 12e9
    level = np.mean(p.values[flat])
    assert level * cfg.symbol_rate == pytest.approx(w.power, rel=0.05)
    at_edge = read_band_psd(p, 16.25e9 - 0.2e9, 16.25e9 + 0.2e9)
    assert 10 * np.log10(at_edge / level) == pytest.approx(-3.0, abs=0.5)


# --------------------------------------------------------------------------
# resolution bandwidth


def test_rbw_preserves_integral_and_flat_spectra():
    f = np.arange(-512, 512) * 10e6
    flat = Psd(f, np.full(f.size, 3e-15))
    smooth = apply_rbw(flat, 180e6)
    np.testing.assert_allclose(smooth.values, flat.values, rtol=1e-12)
    rng = np.random.default_rng(0)
    p = Psd(f, rng.exponential(size=f.size))
    assert apply_rbw(p, 180e6).integral() == pytest.approx(p.integral(), rel=1e-12)


def test_rbw_turns_a_line_into_a_plateau():
    f = np.arange(-512, 512) * 10e6
    v = np.zeros(f.size)
    v[512] = 1.0
    out = apply_rbw(Psd(f, v), 190e6)
    nz = f[out.values > 1e-12]
    assert nz.size == 19
    assert nz[-1] - nz[0] == pytest.approx(180e6)
    np.testing.assert_allclose(out.values[out.values > 1e-12], 1 / 19, rtol=1e-12)


def test_rbw_below_grid_raises():
    with pytest.raises(ValueError):
        apply_rbw(Psd(np.arange(8) * 1e9, np.ones(8)), 1e8)


def test_wider_rbw_fills_a_hole_more():
    cfg = TxConfig(n_symbols=2**14, dac_bits=None)
    hole = HoleSpec(6e9, 1e9)
    w, _ = transmit(cfg, 0.0, [hole])
    p = estimate_psd(w, OsaConfig(rbw=None))
    level = read_band_psd(p, -5e9, 5e9)
    readings = [read_hole_psd(apply_rbw(p, r), hole, 0.3) for r in (50e6, 180e6, 400e6)]
    # the 0.3 guard keeps the filter skirt out of the readout while rbw <= 0.3 width
    assert abs(readings[0]) <= 1e-12 * level
    assert abs(readings[1]) <= 1e-12 * level
    assert readings[2] > 1e-3 * level


# --------------------------------------------------------------------------
# readings


def test_hole_reading_of_noiseless_carved_signal_is_zero():
    cfg = TxConfig(n_symbols=2**14, dac_bits=None)
    hole = HoleSpec(6e9, 1e9)
    w, _ = transmit(cfg, 0.0, [hole])
    p = measure(w, OsaConfig())
    assert read_hole_psd(p, hole) <= 1e-12 * read_band_psd(p, -5e9, 5e9)


def test_hole_reading_excludes_guard_band():
    f = np.arange(-1000, 1000) * 1e7
    v = np.ones(f.size)
    v[np.abs(np.abs(f) - 4e9) <= 0.36e9] = 0.25  # readout span of a 1 GHz hole
    p = Psd(f, v)
    assert read_hole_psd(p, HoleSpec(4e9, 1e9), 0.3) == pytest.approx(0.25)
    assert read_hole_psd(p, HoleSpec(4e9, 1e9), 0.0) > 0.25


def test_symmetric_reading_is_mean_of_mirrors():
    f = np.arange(-1000, 1000) * 1e7
    v = np.where(f > 0, 2.0, 1.0)
    p = Psd(f, v)
    assert read_hole_psd(p, HoleSpec(4e9, 1e9)) == pytest.approx(1.5)
    assert read_hole_psd(p, HoleSpec(4e9, 1e9, symmetric=False)) == pytest.approx(2.0)


def test_hole_outside_grid_raises():
    p = Psd(np.arange(-10, 10) * 1e9, np.ones(20))
    with pytest.raises(ValueError):
        read_hole_psd(p, HoleSpec(10e9, 2e9))


def test_out_of_band_floor_uses_both_sides():
    f = np.arange(-100, 100) * 1e9
    v = np.where(f < 0, 1.0, 3.0)
    p = Psd(f, v)
    assert out_of_band_floor(p, 30e9, 45e9) == pytest.approx(2.0)


# --------------------------------------------------------------------------
# OSNR


def _signal_plus_floor(osnr_db):
    df = 10e6
    f = np.arange(-6000, 6000) * df
    p_sig = 1e-3
    sig = np.where(np.abs(f) <= 16e9, p_sig / 32e9, 0.0)
    floor = p_sig / (12.5e9 * 10 ** (osnr_db / 10))
    return Psd(f, sig + floor)


@pytest.mark.parametrize("osnr_db", [24.3, 14.8])
def test_osnr_recovers_synthetic_value(osnr_db):
    p = _signal_plus_floor(osnr_db)
    # bins at exactly +-16 GHz are included, hence the (3201/3200) signal excess
    got = osnr_out_of_band(p, 32e9, 40e9)
    assert got == pytest.approx(osnr_db + 10 * math.log10(3201 / 3200), abs=1e-9)


def test_osnr_without_noise_is_infinite():
    f = np.arange(-6000, 6000) * 10e6
    p = Psd(f, np.where(np.abs(f) <= 16e9, 1.0, 0.0))
    assert osnr_out_of_band(p, 32e9, 40e9) == math.inf


def test_osnr_reference_inside_band_raises():
    with pytest.raises(ValueError):
        osnr_out_of_band(_signal_plus_floor(20.0), 32e9, 10e9)


# --------------------------------------------------------------------------
# averaging statistics


def test_averaging_reduces_per_bin_spread():
    w = awgn(n=2**16, seed=5)
    sd = []
    for n_avg in (1, 16):
        p = estimate_psd(w, OsaConfig(rbw=None, window_points=2**12, n_averages=n_avg))
        m = np.abs(p.freq) < 40e9
        v = p.values[m]
        sd.append(np.std(v) / np.mean(v))
    # dual-pol periodogram bins are chi-square with 4 degrees of freedom
    assert sd[0] == pytest.approx(1 / math.sqrt(2), rel=0.1)
    assert sd[1] == pytest.approx(1 / math.sqrt(2 * 16), rel=0.1)


def test_acquisition_averaging_reduces_reading_spread():
    hole = HoleSpec(6e9, 1e9)
    single, five = [], []
    for trial in range(24):
        waves = [awgn(n=2**14, seed=100 * trial + k) for k in range(5)]
        single.append(read_hole_psd(measure(waves[0]), hole))
        five.append(read_hole_psd(measure(waves), hole))
    ratio = np.std(single) / np.std(five)
    assert ratio == pytest.approx(math.sqrt(5), rel=0.35)


def test_estimate_psd_counts_averages():
    w = awgn(n=2**14)
    p = estimate_psd([w, w], OsaConfig(rbw=None, window_points=2**12))
    assert p.n_averages == 8


def test_total_power_normalization():
    w = awgn(n=2**14)
    p = estimate_psd(w, OsaConfig(rbw=None), total_power=2e-3)
    assert p.integral() == pytest.approx(2e-3, rel=1e-12)
    assert p.normalization_power == 2e-3


def test_config_validation():
    with pytest.raises(ValueError):
        OsaConfig(window_points=1000)
    with pytest.raises(ValueError):
        OsaConfig(rbw=-1.0)
    with pytest.raises(ValueError):
        OsaConfig(window_type="hann")
