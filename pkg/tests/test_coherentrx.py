import numpy as np
import pytest

from specthole.coherentrx import (ConstellationReport, RxConfig, add_transceiver_noise, align_streams,
                                  cd_compensate, cfo_correct, cma_pol_demux, matched_filter, receive,
                                  resample, rx_front_end, snr_constellation, vv_carrier_phase)
from specthole.fiberlink import accumulated_dispersion, paper_link, propagate_link
from specthole.txgen import TxConfig, generate_symbols, transmit

R, BETA = 32.5e9, 0.2


@pytest.fixture(scope="module")
def tx():
    return TxConfig(n_symbols=2**14, dac_bits=None)


@pytest.fixture(scope="module")
def sig(tx):
    sym = generate_symbols(tx, seed=11)
    w, _ = transmit(tx, 0.0, symbols=sym)
    return w, sym


def qpsk(n, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.choice([-1, 1], (2, n)) + 1j * rng.choice([-1, 1], (2, n))) / np.sqrt(2)


def cnoise(shape, var, seed):
    rng = np.random.default_rng(seed)
    return np.sqrt(var / 2) * (rng.normal(size=shape) + 1j * rng.normal(size=shape))


# --------------------------------------------------------------------------
# chromatic dispersion


def test_cd_zero_is_identity(sig):
    w, _ = sig
    np.testing.assert_allclose(cd_compensate(w, 0.0).field, w.field, atol=1e-15)


def test_cd_preserves_energy(sig):
    w, _ = sig
    assert cd_compensate(w, 5010.0, slope_total=17.1).energy == pytest.approx(w.energy, rel=1e-12)


def test_cd_plus_minus_cancel(sig):
    w, _ = sig
    back = cd_compensate(cd_compensate(w, 1234.0, slope_total=5.0), -1234.0, slope_total=-5.0)
    assert np.linalg.norm(back.field - w.field) / np.linalg.norm(w.field) <= 1e-12


def test_cd_compensation_inverts_link_dispersion(sig):
    w, _ = sig
    link = paper_link(gamma=0.0)
    out = propagate_link(w, link)
    d, s = accumulated_dispersion(link)
    back = cd_compensate(out, d, slope_total=s)
    assert np.linalg.norm(back.field - w.field) / np.linalg.norm(w.field) <= 1e-6


def test_cd_sanity_limit(sig):
    with pytest.raises(ValueError):
        cd_compensate(sig[0], 2e6)


# --------------------------------------------------------------------------
# front end


def test_front_end_resamples_to_two_sps(sig):
    w, _ = sig
    x = rx_front_end(w, RxConfig(), R)
    assert x.sample_rate == pytest.approx(2 * R)
    assert len(x) == 2 * len(w) // 4
    assert x.power == pytest.approx(w.power, rel=1e-3)


def test_resample_needs_integer_length(sig):
    with pytest.raises(ValueError):
        resample(sig[0], 0.333e9)


def test_matched_filter_recovers_symbols_at_two_sps(sig):
    w, sym = sig
    x = matched_filter(rx_front_end(w, RxConfig(), R), R, BETA)
    s = x.field[:, ::2]
    a = np.vdot(sym.symbols[0], s[0]) / s.shape[1]
    err = np.linalg.norm(s - a * sym.symbols) / np.linalg.norm(a * sym.symbols)
    assert err < 1e-3


# --------------------------------------------------------------------------
# polarization demultiplexing


def _rotated(w, theta, phi=0.4):
    rot = np.array([[np.cos(theta), -np.sin(theta) * np.exp(1j * phi)],
                    [np.sin(theta) * np.exp(-1j * phi), np.cos(theta)]])
    return w.with_field(rot @ w.field)


@pytest.mark.parametrize("theta", [0.0, np.pi / 4, 1.2])
def test_cma_separates_rotated_polarizations(sig, theta):
    w, sym = sig
    x = matched_filter(rx_front_end(_rotated(w, theta), RxConfig(), R), R, BETA)
    out = cma_pol_demux(x, RxConfig(), R)
    _, _, peaks = align_streams(out, sym.symbols)
    assert min(abs(p) for p in peaks) > 0.95


def test_cma_error_decreases(sig):
    w, _ = sig
    x = matched_filter(rx_front_end(_rotated(w, 0.5), RxConfig(), R), R, BETA)
    _, h, err = cma_pol_demux(x, RxConfig(cma_preamble=0, cma_step=1e-3), R, return_taps=True)
    assert np.mean(err[-2000:]) < 0.1 * np.mean(err[:200])
    assert h.shape == (2, 2, 15)


def test_cma_rejects_wrong_sampling(sig):
    with pytest.raises(ValueError):
        cma_pol_demux(sig[0], RxConfig(), R)


# --------------------------------------------------------------------------
# carrier recovery


def test_cfo_estimate_within_half_megahertz():
    n = 2**16
    s = qpsk(n, 1) + cnoise((2, n), 10 ** (-1.5), 2)
    k = np.arange(n)
    f0 = 100e6
    _, f_est = cfo_correct(s * np.exp(2j * np.pi * f0 * k / R), R)
    assert abs(f_est - f0) <= 0.5e6


def test_cfo_at_ambiguity_limit_raises():
    n = 2**12
    k = np.arange(n)
    s = qpsk(n, 1) * np.exp(2j * np.pi * (R / 8) * k / R)
    with pytest.raises(ValueError, match="R/8"):
        cfo_correct(s, R)


def test_vv_removes_static_phase():
    n = 4096
    ref = qpsk(n, 3)
    s = ref * np.exp(1j * np.pi / 8) + cnoise((2, n), 10 ** (-2.0), 4)
    pr = vv_carrier_phase(s, 101, ref)
    np.testing.assert_allclose(np.median(pr.phase, axis=1), np.pi / 8, atol=0.02)
    assert pr.cycle_slips == 0


def test_vv_tracks_slow_phase_ramp():
    n = 8192
    ref = qpsk(n, 5)
    theta = 2 * np.pi * 1e-5 * np.arange(n)  # well inside the estimator bandwidth
    s = ref * np.exp(1j * theta) + cnoise((2, n), 10 ** (-2.0), 6)
    pr = vv_carrier_phase(s, 51, ref)
    resid = np.angle(np.exp(1j * (pr.phase - theta)))
    assert np.max(np.abs(resid[:, 100:-100] - np.median(resid))) < 0.1


def test_vv_rejects_even_window():
    with pytest.raises(ValueError):
        vv_carrier_phase(qpsk(64), 10)


# --------------------------------------------------------------------------
# SNR estimation


def test_snr_estimator_on_known_awgn():
    n = 2**15
    ref = qpsk(n, 7)
    s = ref + cnoise((2, n), 10 ** (-1.5), 8)
    rep = snr_constellation(s, ref)
    assert rep.snr_db == pytest.approx(15.0, abs=0.2)
    assert rep.valid


def test_snr_loopback_is_high():
    ref = qpsk(4096, 9)
    assert snr_constellation(ref + cnoise(ref.shape, 1e-7, 10), ref).snr_db >= 50


def test_snr_invariant_to_global_phase_and_pol_swap():
    n = 2**14
    ref = qpsk(n, 11)
    s = ref + cnoise((2, n), 0.05, 12)
    a = snr_constellation(s, ref).snr_db
    b = snr_constellation(np.exp(0.7j) * s[::-1], ref).snr_db
    c = snr_constellation(np.roll(s, 17, axis=1), ref).snr_db
    assert a == pytest.approx(b, abs=1e-9)
    assert a == pytest.approx(c, abs=1e-9)


def test_report_validity_threshold():
    assert not ConstellationReport(10, 10, 10, 0, 0, 999).valid


def test_estimator_spread_at_desk_scale():
    n = 2**15
    vals = []
    for seed in range(10):
        ref = qpsk(n, 100 + seed)
        s = ref + cnoise((2, n), 10 ** (-0.9), 200 + seed)
        vals.append(snr_constellation(s, ref).snr_db)
    assert np.std(vals, ddof=1) <= 0.1


# --------------------------------------------------------------------------
# full chain


def test_back_to_back_noiseless(sig):
    w, sym = sig
    rep = receive(w, RxConfig(cd_total=0.0), R, BETA, sym)
    assert rep.snr_db >= 35
    assert rep.cycle_slips == 0


def test_back_to_back_transceiver_noise_calibration(sig):
    w, sym = sig
    noisy = add_transceiver_noise(w, 19.15, R, seed=4)
    rep = receive(noisy, RxConfig(cd_total=0.0), R, BETA, sym)
    # small CMA tracking misadjustment on top
    assert rep.snr_db == pytest.approx(19.15, abs=0.15)


def test_receive_after_dispersive_link(sig):
    w, sym = sig
    link = paper_link(0.0, gamma=0.0)
    out = propagate_link(w, link)
    d, s = accumulated_dispersion(link)
    rep = receive(add_transceiver_noise(out, 15.0, R, seed=1), RxConfig(cd_total=d, cd_slope_total=s),
                  R, BETA, sym)
    assert rep.snr_db == pytest.approx(15.0, abs=0.15)


def test_receive_evaluates_requested_slice(sig):
    w, sym = sig
    rep = receive(w, RxConfig(cd_total=0.0, eval_symbols=4096), R, BETA, sym)
    assert rep.symbols_evaluated == 4096


def test_transceiver_noise_level(sig):
    w, _ = sig
    noisy = add_transceiver_noise(w, 20.0, R, seed=3)
    n0 = (noisy.power - w.power) / w.sample_rate
    assert n0 * R / w.power == pytest.approx(0.01, rel=0.03)


def test_rx_config_validation():
    with pytest.raises(ValueError):
        RxConfig(cma_taps=4)
    with pytest.raises(ValueError):
        RxConfig(vv_window=10)
    with pytest.raises(ValueError):
        RxConfig(cma_step=0.0)
