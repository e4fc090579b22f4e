"""Optical spectrum analyzer emulation.

A :class:`Psd` holds a two-sided baseband spectrum in W/Hz on an ascending,
uniform grid. Because every waveform in this package is one period of a cyclic
signal, the grid is periodic too: integrals are plain sums times the bin width
(the trapezoid rule on a closed period).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .txgen import DualPolWaveform, HoleSpec

__all__ = [
    "Psd",
    "OsaConfig",
    "estimate_psd",
    "apply_rbw",
    "measure",
    "read_hole_psd",
    "read_band_psd",
    "out_of_band_floor",
    "osnr_out_of_band",
]


@dataclass(frozen=True)
class Psd:
    freq: np.ndarray
    values: np.ndarray
    rbw: float | None = None
    n_averages: int = 1
    normalization_power: float | None = None

    def __post_init__(self):
        if self.freq.shape != self.values.shape or self.freq.ndim != 1:
            raise ValueError("freq and values must be 1-D arrays of equal length")
        if self.freq.size >= 2 and np.any(np.diff(self.freq) <= 0):
            raise ValueError("freq must be strictly ascending")

    @property
    def df(self) -> float:
        return float(self.freq[1] - self.freq[0])

    def integral(self, lo: float = -np.inf, hi: float = np.inf) -> float:
        """Power in W over bins with centres in [lo, hi]."""
        m = (self.freq >= lo) & (self.freq <= hi)
        return float(np.sum(self.values[m]) * self.df)

    def scaled(self, factor: float) -> "Psd":
        return replace(self, values=self.values * factor)

    def at(self, f) -> np.ndarray:
        """Linear interpolation of the PSD at ``f``."""
        return np.interp(f, self.freq, self.values)


@dataclass(frozen=True)
class OsaConfig:
    """Periodogram and resolution settings.

    ``window_points=None`` uses the whole record as a single window; since the
    simulated signals are cyclic this is leakage-free, which is what the hole
    readout needs. ``n_averages=None`` averages every complete window.
    """

    rbw: float | None = 180e6
    window_points: int | None = None
    window_type: str = "rectangular"
    n_averages: int | None = None

    def __post_init__(self):
        if self.rbw is not None and self.rbw <= 0:
            raise ValueError("rbw must be > 0")
        if self.window_points is not None:
            wp = self.window_points
            if wp < 16 or wp & (wp - 1):
                raise ValueError("window_points must be a power of two >= 16")
        if self.window_type != "rectangular":
            raise ValueError("only the rectangular window is supported")
        if self.n_averages is not None and self.n_averages < 1:
            raise ValueError("n_averages must be >= 1")


def estimate_psd(w: DualPolWaveform | Sequence[DualPolWaveform], cfg: OsaConfig | None = None,
                 total_power: float | None = None) -> Psd:
    """Averaged rectangular-window periodogram of both polarizations summed.

    Several waveforms (independent acquisitions) may be passed; their
    periodograms are averaged. With ``total_power`` the result is rescaled so
    that its integral equals it; otherwise Parseval scaling is kept (integral
    equals the mean power of the record).
    """
    cfg = cfg or OsaConfig()
    waves = [w] if isinstance(w, DualPolWaveform) else list(w)
    fs = waves[0].sample_rate
    acc = None
    count = 0
    for wave in waves:
        n = len(wave)
        nw = n if cfg.window_points is None else cfg.window_points
        if n < nw:
            raise ValueError(f"waveform of {n} samples is shorter than one window ({nw})")
        n_seg = n // nw
        if cfg.n_averages is not None:
            n_seg = min(n_seg, cfg.n_averages)
        segs = wave.field[:, : n_seg * nw].reshape(2, n_seg, nw)
        p = np.sum(np.abs(np.fft.fft(segs, axis=-1)) ** 2, axis=(0, 1))
        acc = p if acc is None else acc + p
        count += n_seg
    values = np.fft.fftshift(acc) / (count * nw * fs)
    freq = np.fft.fftshift(np.fft.fftfreq(nw, 1.0 / fs))
    psd = Psd(freq, values, rbw=None, n_averages=count)
    if total_power is not None:
        integ = psd.integral()
        if integ <= 0:
            raise ValueError("cannot normalize an all-zero spectrum")
        psd = replace(psd.scaled(total_power / integ), normalization_power=total_power)
    return psd


def _rbw_bins(rbw: float, df: float) -> int:
    k = int(2 * round((rbw / df - 1) / 2) + 1)
    return max(k, 1)


def apply_rbw(p: Psd, rbw: float) -> Psd:
    """Rectangular resolution filter of width ``rbw`` (odd bin count, nearest).

    The kernel is applied cyclically, so the integral is preserved exactly.
    """
    if rbw < p.df * (1 - 1e-9):
        raise ValueError(f"rbw {rbw:.4g} Hz is below the grid resolution {p.df:.4g} Hz")
    k = _rbw_bins(rbw, p.df)
    vals = uniform_filter1d(p.values, size=k, mode="wrap") if k > 1 else p.values.copy()
    return replace(p, values=vals, rbw=rbw)


def measure(waves: DualPolWaveform | Sequence[DualPolWaveform], cfg: OsaConfig | None = None,
            total_power: float | None = None) -> Psd:
    """Periodogram followed by the resolution filter, as one OSA sweep."""
    cfg = cfg or OsaConfig()
    psd = estimate_psd(waves, cfg, total_power)
    if cfg.rbw is None or cfg.rbw <= psd.df:
        return psd
    return apply_rbw(psd, cfg.rbw)


def read_band_psd(p: Psd, lo: float, hi: float) -> float:
    m = (p.freq >= lo) & (p.freq <= hi)
    if not np.any(m):
        raise ValueError(f"no PSD bins within [{lo:.4g}, {hi:.4g}] Hz")
    return float(np.mean(p.values[m]))


def read_hole_psd(p: Psd, hole: HoleSpec, guard_fraction: float = 0.3) -> float:
    """Mean PSD over the central ``(1 - guard_fraction)`` of the hole.

    Symmetric holes return the linear mean of both mirror readings.
    """
    if not 0.0 <= guard_fraction < 0.9:
        raise ValueError("guard_fraction must lie in [0, 0.9)")
    half = (1.0 - guard_fraction) * hole.width / 2
    lo, hi = hole.f_h - hole.width / 2, hole.f_h + hole.width / 2
    if lo < p.freq[0] or hi > p.freq[-1] + p.df:
        raise ValueError("hole lies outside the PSD grid")
    readings = [read_band_psd(p, hole.f_h - half, hole.f_h + half)]
    if hole.symmetric and hole.f_h != 0:
        readings.append(read_band_psd(p, -hole.f_h - half, -hole.f_h + half))
    return float(np.mean(readings))


def out_of_band_floor(p: Psd, lo: float, hi: float) -> float:
    """Mean PSD over lo <= |f| <= hi (both sides of the carrier)."""
    m = (np.abs(p.freq) >= lo) & (np.abs(p.freq) <= hi)
    if not np.any(m):
        raise ValueError("reference region lies outside the grid")
    return float(np.mean(p.values[m]))


def osnr_out_of_band(p: Psd, signal_band: float, noise_ref_offset: float,
                     ref_bandwidth: float = 12.5e9, ref_window: float = 2e9) -> float:
    """Classic out-of-band OSNR in dB.

    The noise floor is read over ``noise_ref_offset +- ref_window/2`` on both
    sides, assumed flat under the signal, subtracted from the in-band
    integral and referred to ``ref_bandwidth``. A zero floor gives +inf.
    """
    if noise_ref_offset <= signal_band / 2:
        raise ValueError("noise reference must lie outside the signal band")
    lo, hi = noise_ref_offset - ref_window / 2, noise_ref_offset + ref_window / 2
    if hi > -p.freq[0] and hi > p.freq[-1]:
        raise ValueError("noise reference region lies outside the grid")
    floor = out_of_band_floor(p, lo, hi)
    in_band = (p.freq >= -signal_band / 2) & (p.freq <= signal_band / 2)
    p_sig = float(np.sum(p.values[in_band] - floor) * p.df)
    if floor <= 0:
        return math.inf
    return 10 * math.log10(p_sig / (floor * ref_bandwidth))
