"""Coherent receiver DSP: front end, CD compensation, CMA, CFO, Viterbi-Viterbi, SNR.

All streams are handled as (2, n) arrays. The simulated signals are cyclic, so
the adaptive stages may run over the block periodically (a convergence
preamble wraps around) and every symbol of the block can be evaluated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.signal
from numba import njit
from scipy.ndimage import uniform_filter1d

from .fiberlink import FiberSpan, dispersion_coeffs
from .txgen import DualPolWaveform, SymbolSequence, raised_cosine_spectrum
from .units import child_seed

__all__ = [
    "RxConfig",
    "ConstellationReport",
    "PhaseRecovery",
    "resample",
    "rx_front_end",
    "matched_filter",
    "cd_compensate",
    "cma_pol_demux",
    "cfo_correct",
    "vv_carrier_phase",
    "align_streams",
    "snr_constellation",
    "add_transceiver_noise",
    "receive",
]

log = logging.getLogger(__name__)

CD_SANITY_LIMIT = 1e6  # ps/nm


@dataclass(frozen=True)
class RxConfig:
    adc_rate: float = 40e9
    analog_bandwidth: float | None = 20e9
    cd_total: float = 5010.0
    cd_slope_total: float = 0.0
    wavelength: float = 1550e-9
    matched_filter: bool = True
    cma_taps: int = 15
    cma_step: float = 1e-4
    cma_acquisition_step: float = 1e-3
    cma_preamble: int = 20000
    vv_window: int = 301
    eval_symbols: int | None = None

    def __post_init__(self):
        if self.cma_taps < 3 or self.cma_taps % 2 == 0:
            raise ValueError("cma_taps must be odd and >= 3")
        if self.vv_window < 1 or self.vv_window % 2 == 0:
            raise ValueError("vv_window must be odd and >= 1")
        if self.cma_step <= 0 or self.cma_acquisition_step <= 0:
            raise ValueError("CMA step sizes must be > 0")
        if self.analog_bandwidth is not None and self.analog_bandwidth <= 0:
            raise ValueError("analog_bandwidth must be > 0")


@dataclass(frozen=True)
class ConstellationReport:
    snr_db_x: float
    snr_db_y: float
    snr_db: float
    frequency_offset: float
    phase_error_var: float
    symbols_evaluated: int
    cycle_slips: int = 0

    @property
    def valid(self) -> bool:
        return self.symbols_evaluated >= 1000


@dataclass(frozen=True)
class PhaseRecovery:
    symbols: np.ndarray
    phase: np.ndarray
    cycle_slips: int = 0


# --------------------------------------------------------------------------
# front end


def resample(w: DualPolWaveform, new_rate: float) -> DualPolWaveform:
    """FFT resampling of one cyclic block to ``new_rate``."""
    m = len(w) * new_rate / w.sample_rate
    if abs(m - round(m)) > 1e-6:
        raise ValueError("resampled length must be an integer number of samples")
    m = int(round(m))
    if m == len(w):
        return w
    return DualPolWaveform(scipy.signal.resample(w.field, m, axis=-1), new_rate)


def _brickwall(w: DualPolWaveform, bandwidth: float) -> DualPolWaveform:
    spec = np.fft.fft(w.field, axis=-1)
    spec[:, np.abs(w.freqs()) > bandwidth] = 0.0
    return w.with_field(np.fft.ifft(spec, axis=-1))


def rx_front_end(w: DualPolWaveform, cfg: RxConfig, symbol_rate: float) -> DualPolWaveform:
    """Brick-wall low-pass at ``analog_bandwidth``, then resample to 2 samples/symbol."""
    if w.sample_rate < symbol_rate:
        raise ValueError("input sample rate is below the symbol rate")
    target = 2 * symbol_rate
    if target > w.sample_rate:
        spec = np.fft.fft(w.field, axis=-1)
        if np.any(np.abs(spec[:, np.abs(w.freqs()) >= 0.999 * w.sample_rate / 2]) > 0):
            raise ValueError("no band headroom to upsample to 2 samples/symbol")
    if cfg.analog_bandwidth is not None:
        w = _brickwall(w, cfg.analog_bandwidth)
    return resample(w, target)


def matched_filter(w: DualPolWaveform, symbol_rate: float, roll_off: float) -> DualPolWaveform:
    h = np.sqrt(raised_cosine_spectrum(w.freqs(), symbol_rate, roll_off))
    return w.with_field(np.fft.ifft(np.fft.fft(w.field, axis=-1) * h, axis=-1))


def cd_compensate(w: DualPolWaveform, cd_total: float, wavelength: float = 1550e-9,
                  slope_total: float = 0.0) -> DualPolWaveform:
    """Undo ``cd_total`` ps/nm (and ``slope_total`` ps/nm^2) of accumulated dispersion."""
    if abs(cd_total) >= CD_SANITY_LIMIT:
        raise ValueError(f"|cd_total| = {abs(cd_total):.3g} ps/nm is beyond the sanity limit")
    eq = FiberSpan(length=1e3, alpha_db_km=0.0, dispersion=cd_total,
                   dispersion_slope=slope_total, gamma=0.0, wavelength=wavelength)
    beta2, beta3 = dispersion_coeffs(eq)
    om = 2 * np.pi * w.freqs()
    h = np.exp(-1j * (beta2 / 2 * om**2 + beta3 / 6 * om**3) * eq.length)
    return w.with_field(np.fft.ifft(np.fft.fft(w.field, axis=-1) * h, axis=-1))


# --------------------------------------------------------------------------
# CMA


@njit(cache=True)
def _cma_core(xp, h, mus, radius, ks):
    ntaps = h.shape[2]
    n_out = ks.size
    out = np.empty((2, n_out), dtype=np.complex128)
    err = np.empty(n_out)
    y = np.empty(2, dtype=np.complex128)
    for i in range(n_out):
        base = 2 * ks[i]
        for p in range(2):
            acc = 0j
            for q in range(2):
                for t in range(ntaps):
                    acc += h[p, q, t] * xp[q, base + t]
            y[p] = acc
        e2 = 0.0
        for p in range(2):
            e = radius - (y[p].real ** 2 + y[p].imag ** 2)
            e2 += e * e
            g = mus[i] * e * y[p]
            for q in range(2):
                for t in range(ntaps):
                    h[p, q, t] += g * np.conj(xp[q, base + t])
        out[0, i] = y[0]
        out[1, i] = y[1]
        err[i] = e2 / 2
    return out, err


def _cma_pass(x2, h, mu, mu_acq, radius, preamble):
    n_sym = x2.shape[1] // 2
    c = h.shape[2] // 2
    xp = np.concatenate([x2[:, -c:], x2, x2[:, : c + 1]], axis=1)
    ks = (np.arange(-preamble, n_sym) % n_sym).astype(np.int64)
    # fast acquisition over the preamble, then the small tracking step
    mus = np.full(ks.size, mu)
    mus[:preamble] = mu_acq
    out, err = _cma_core(xp, h, mus, radius, ks)
    return out[:, -n_sym:], err[-n_sym:]


def _max_xcorr(a, b):
    c = np.fft.ifft(np.fft.fft(a) * np.conj(np.fft.fft(b)))
    return float(np.max(np.abs(c)) / math.sqrt(np.sum(np.abs(a) ** 2) * np.sum(np.abs(b) ** 2)))


def cma_pol_demux(w: DualPolWaveform, cfg: RxConfig, symbol_rate: float,
                  max_error: float = 1.0, return_taps: bool = False):
    """2x2 butterfly of T/2-spaced taps adapted by the constant modulus algorithm.

    Input must be at 2 samples/symbol; output is one sample per symbol. If both
    outputs lock onto the same source, the second row is re-initialized as the
    orthogonal complement of the first and the pass is repeated.
    """
    sps = w.sample_rate / symbol_rate
    if abs(sps - 2) > 1e-9:
        raise ValueError("CMA expects 2 samples per symbol")
    x2 = w.field / np.sqrt(np.mean(np.abs(w.field) ** 2, axis=1, keepdims=True))
    ntaps = cfg.cma_taps
    h = np.zeros((2, 2, ntaps), dtype=np.complex128)
    h[0, 0, ntaps // 2] = 1.0
    h[1, 1, ntaps // 2] = 1.0
    radius = 1.0
    out, err = _cma_pass(x2, h, cfg.cma_step, cfg.cma_acquisition_step, radius, cfg.cma_preamble)
    if _max_xcorr(out[0], out[1]) > 0.8:
        log.info("CMA singularity: both outputs on one source, re-initializing row 2")
        h[1, 0] = -np.conj(h[0, 1][::-1])
        h[1, 1] = np.conj(h[0, 0][::-1])
        out, err = _cma_pass(x2, h, cfg.cma_step, cfg.cma_acquisition_step, radius, cfg.cma_preamble)
    mean_err = float(np.mean(err))
    if not np.isfinite(mean_err) or mean_err > max_error:
        raise RuntimeError(f"CMA did not converge (mean error {mean_err:.3g})")
    return (out, h, err) if return_taps else out


# --------------------------------------------------------------------------
# carrier recovery


def cfo_correct(s: np.ndarray, symbol_rate: float, oversample: int = 4):
    """Fourth-power frequency offset estimate and removal.

    Returns (corrected streams, estimated offset in Hz). Offsets at or beyond
    +-R/8 alias in the fourth power and raise.
    """
    s = np.atleast_2d(np.asarray(s, dtype=complex))
    n = s.shape[1]
    nfft = oversample * n
    spec = np.sum(np.abs(np.fft.fft(s**4, n=nfft, axis=-1)) ** 2, axis=0)
    freqs = np.fft.fftfreq(nfft, 1.0 / symbol_rate)
    f_est = freqs[int(np.argmax(spec))] / 4
    res = symbol_rate / nfft / 4
    if abs(f_est) >= symbol_rate / 8 - 2 * res:
        raise ValueError(f"frequency offset {f_est:.4g} Hz is at the fourth-power ambiguity limit R/8")
    k = np.arange(n)
    return s * np.exp(-2j * np.pi * f_est * k / symbol_rate), float(f_est)


def align_streams(s: np.ndarray, ref: np.ndarray, min_peak: float = 0.3):
    """Find the polarization permutation and cyclic delays matching ``s`` to ``ref``.

    Returns (perm, lags, peaks): output pol p matches reference pol perm[p]
    when rolled by -lags[p]; peaks are the normalized complex correlation
    values at those lags.
    """
    s = np.atleast_2d(s)
    ref = np.atleast_2d(ref)
    n = s.shape[1]
    if ref.shape[1] != n:
        raise ValueError("streams and reference must have the same length")
    fs = np.fft.fft(s, axis=-1)
    fr = np.fft.fft(ref, axis=-1)
    best = {}
    for p in range(s.shape[0]):
        for q in range(ref.shape[0]):
            c = np.fft.ifft(fs[p] * np.conj(fr[q]))
            c /= math.sqrt(np.sum(np.abs(s[p]) ** 2) * np.sum(np.abs(ref[q]) ** 2))
            i = int(np.argmax(np.abs(c)))
            best[p, q] = (i, c[i])
    if s.shape[0] == 1:
        perm = (int(np.argmax([abs(best[0, q][1]) for q in range(ref.shape[0])])),)
    else:
        straight = abs(best[0, 0][1]) + abs(best[1, 1][1])
        swapped = abs(best[0, 1][1]) + abs(best[1, 0][1])
        perm = (0, 1) if straight >= swapped else (1, 0)
    lags = tuple(best[p, perm[p]][0] for p in range(s.shape[0]))
    peaks = tuple(best[p, perm[p]][1] for p in range(s.shape[0]))
    if min(abs(v) for v in peaks) < min_peak:
        raise ValueError(f"alignment failed: correlation peak {min(abs(v) for v in peaks):.3f} < {min_peak}")
    return perm, lags, peaks


def _aligned_ref(ref, perm, lags):
    return np.stack([np.roll(ref[perm[p]], lags[p]) for p in range(len(perm))])


def vv_carrier_phase(s: np.ndarray, window: int, ref: np.ndarray | None = None,
                     slip_block: int = 1024) -> PhaseRecovery:
    """Viterbi-Viterbi phase estimate with a ``window``-symbol moving average of s^4.

    With a known reference the global pi/2 ambiguity is removed; blocks whose
    best quadrant differs from the global one are counted as cycle slips
    (flagged, not repaired).
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd")
    s = np.atleast_2d(np.asarray(s, dtype=complex))
    s4 = s**4
    avg = (uniform_filter1d(s4.real, window, axis=-1, mode="wrap")
           + 1j * uniform_filter1d(s4.imag, window, axis=-1, mode="wrap"))
    phase = np.unwrap(np.angle(-avg), axis=-1) / 4
    out = s * np.exp(-1j * phase)
    slips = 0
    if ref is not None:
        ref = np.atleast_2d(ref)
        perm, lags, peaks = align_streams(out, ref)
        r = _aligned_ref(ref, perm, lags)
        for p in range(out.shape[0]):
            quad = int(np.round(np.angle(peaks[p]) / (np.pi / 2))) % 4
            out[p] *= np.exp(-1j * quad * np.pi / 2)
            phase[p] += quad * np.pi / 2
            n_blk = out.shape[1] // slip_block
            if n_blk > 1:
                blk = (out[p, : n_blk * slip_block] * np.conj(r[p, : n_blk * slip_block])).reshape(n_blk, -1)
                q_blk = np.round(np.angle(blk.sum(axis=1)) / (np.pi / 2)).astype(int) % 4
                slips += int(np.count_nonzero(q_blk != 0))
        if slips:
            log.warning("Viterbi-Viterbi: %d block(s) with a quadrant slip", slips)
    return PhaseRecovery(out, phase, slips)


# --------------------------------------------------------------------------
# SNR


def snr_constellation(s: np.ndarray, ref: SymbolSequence | np.ndarray,
                      frequency_offset: float = 0.0, cycle_slips: int = 0) -> ConstellationReport:
    """Constellation SNR after alignment and a per-pol complex scalar fit.

    With s = a * ref + n, SNR = |a|^2 E|ref|^2 / E|n|^2. The combined value
    pools signal and noise powers of both polarizations.
    """
    r = ref.symbols if isinstance(ref, SymbolSequence) else np.atleast_2d(ref)
    s = np.atleast_2d(s)
    perm, lags, _ = align_streams(s, r)
    ra = _aligned_ref(r, perm, lags)
    sig, noi, snr, perr = [], [], [], []
    for p in range(s.shape[0]):
        a = np.vdot(ra[p], s[p]) / np.vdot(ra[p], ra[p])
        n = s[p] - a * ra[p]
        ps = abs(a) ** 2 * float(np.mean(np.abs(ra[p]) ** 2))
        pn = float(np.mean(np.abs(n) ** 2))
        sig.append(ps)
        noi.append(pn)
        snr.append(10 * math.log10(ps / pn) if pn > 0 else math.inf)
        perr.append(float(np.var(np.angle(s[p] / (a * ra[p])))))
    total = 10 * math.log10(sum(sig) / sum(noi)) if sum(noi) > 0 else math.inf
    return ConstellationReport(snr_db_x=snr[0], snr_db_y=snr[-1], snr_db=total,
                               frequency_offset=frequency_offset,
                               phase_error_var=float(np.mean(perr)),
                               symbols_evaluated=int(s.shape[1]), cycle_slips=cycle_slips)


def add_transceiver_noise(w: DualPolWaveform, snr_db: float | None, symbol_rate: float,
                          seed: int = 0) -> DualPolWaveform:
    """White noise with N0 * R = P / SNR over the full sample band."""
    if snr_db is None or math.isinf(snr_db):
        return w
    n0 = w.power / (symbol_rate * 10 ** (snr_db / 10))
    sigma2 = n0 * w.sample_rate / 2  # per pol
    rng = np.random.default_rng(child_seed(seed, "txrx"))
    g = rng.normal(scale=np.sqrt(sigma2 / 2), size=(2, 2, len(w)))
    return w.with_field(w.field + g[0] + 1j * g[1])


def receive(w: DualPolWaveform, cfg: RxConfig, symbol_rate: float, roll_off: float,
            ref: SymbolSequence, vv_window: int | None = None, return_symbols: bool = False):
    """Run the whole chain and return a :class:`ConstellationReport`."""
    x = rx_front_end(w, cfg, symbol_rate)
    x = cd_compensate(x, cfg.cd_total, cfg.wavelength, cfg.cd_slope_total)
    if cfg.matched_filter:
        x = matched_filter(x, symbol_rate, roll_off)
    s = cma_pol_demux(x, cfg, symbol_rate)
    s, f_off = cfo_correct(s, symbol_rate)
    pr = vv_carrier_phase(s, vv_window or cfg.vv_window, ref.symbols)
    sym = pr.symbols
    r = ref.symbols
    if cfg.eval_symbols is not None and cfg.eval_symbols < sym.shape[1]:
        # evaluate a contiguous slice; the alignment is cyclic so any slice works
        k = cfg.eval_symbols
        perm, lags, _ = align_streams(sym, r)
        r = _aligned_ref(r, perm, lags)[:, :k]
        sym = sym[:, :k]
    rep = snr_constellation(sym, r, f_off, pr.cycle_slips)
    return (rep, sym) if return_symbols else rep
