"""From noise PSDs to SNR: matched-filter weighting, TX-RX calibration, slope fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .osa import Psd
from .txgen import raised_cosine_spectrum

__all__ = [
    "CalibrationConstants",
    "SnrRecord",
    "SnrReport",
    "snr_from_noise_psd",
    "signal_power_in_band",
    "combine_snr",
    "fit_loglog_slope",
    "optimum_power",
]


@dataclass(frozen=True)
class CalibrationConstants:
    snr_txrx_inv_db: float = -19.15
    p_lin_dbm: float = -19.0
    reference_bandwidth: float = 100e9

    def __post_init__(self):
        for name in ("snr_txrx_inv_db", "p_lin_dbm"):
            v = getattr(self, name)
            if math.isnan(v) or v == math.inf:
                raise ValueError(f"{name} must be finite or -inf")
        if not math.isfinite(self.reference_bandwidth) or self.reference_bandwidth <= 0:
            raise ValueError("reference_bandwidth must be a positive finite number")


@dataclass(frozen=True)
class SnrRecord:
    p_dbm: float
    snr_hole_db: float
    snr_constellation_db: float | None = None
    snr_sim_db: float | None = None
    snr_hole_optical_db: float | None = None


@dataclass(frozen=True)
class SnrReport:
    records: tuple[SnrRecord, ...]
    slopes: dict = field(default_factory=dict)
    optimum_power_dbm: float | None = None

    def __post_init__(self):
        recs = tuple(sorted(self.records, key=lambda r: r.p_dbm))
        object.__setattr__(self, "records", recs)
        for k, v in self.slopes.items():
            if not math.isfinite(v):
                raise ValueError(f"slope {k!r} is not finite")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def snr_from_noise_psd(noise: Psd, p_signal: float, symbol_rate: float, roll_off: float) -> float:
    """Optical SNR (dB) seen through a raised-cosine matched filter.

    N_eff = integral of S_noise(f) w(f) df, with w the raised-cosine power
    response scaled so that integral w df = R: white noise N0 gives exactly
    N0 * R.
    """
    edge = symbol_rate * (1 + roll_off) / 2
    if noise.freq[0] > -edge + noise.df / 2 or noise.freq[-1] < edge - noise.df / 2:
        raise ValueError("noise PSD does not cover the occupied signal band")
    w = raised_cosine_spectrum(noise.freq, symbol_rate, roll_off)
    w *= symbol_rate / (np.sum(w) * noise.df)
    n_eff = float(np.sum(noise.values * w) * noise.df)
    return 10 * math.log10(p_signal / n_eff)


def signal_power_in_band(total: Psd, noise: Psd, symbol_rate: float, roll_off: float) -> float:
    """Coherent signal power: in-band total minus in-band noise, both integrated over R(1+b).

    Kerr interference is drawn from the signal itself, so the part of the
    received power that still correlates with the transmitted symbols shrinks
    by the NLI power; reading the signal from the launch power would overstate
    it by that amount.
    """
    edge = symbol_rate * (1 + roll_off) / 2
    p = total.integral(-edge, edge) - noise.integral(-edge, edge)
    if p <= 0:
        raise ValueError("noise exceeds the in-band power; no signal left")
    return p


def combine_snr(snr_opt_db: float, cal: CalibrationConstants) -> float:
    """Add the transceiver noise: 1/SNR = 1/SNR_opt + 1/SNR_TXRX (linear)."""
    inv = 10 ** (-snr_opt_db / 10) + 10 ** (cal.snr_txrx_inv_db / 10)
    return -10 * math.log10(inv) if inv > 0 else math.inf


def fit_loglog_slope(records: Sequence[tuple[float, float]], window: tuple[float, float] | None = None) -> float:
    """Least-squares slope (dB/dB) of SNR against launch power inside ``window``.

    Signed: an NLI-limited branch comes out near -2, an ASE-limited one near +1.
    """
    pts = [(p, s) for p, s in records
           if window is None or window[0] - 1e-9 <= p <= window[1] + 1e-9]
    if len(pts) < 2:
        raise ValueError("need at least 2 points in the power window")
    p = np.array([q[0] for q in pts], dtype=float)
    s = np.array([q[1] for q in pts], dtype=float)
    if np.ptp(p) == 0:
        raise ValueError("degenerate window: all powers equal")
    return float(np.polyfit(p, s, 1)[0])


def optimum_power(p_dbm: Sequence[float], snr_db: Sequence[float]) -> float | None:
    """Interior maximum via a parabola through the best point and its neighbours.

    Returns None when the maximum sits at either end of the sweep.
    """
    p = np.asarray(p_dbm, dtype=float)
    s = np.asarray(snr_db, dtype=float)
    i = int(np.argmax(s))
    if i == 0 or i == len(s) - 1:
        return None
    a, b, _ = np.polyfit(p[i - 1 : i + 2], s[i - 1 : i + 2], 2)
    return float(-b / (2 * a)) if a < 0 else float(p[i])
