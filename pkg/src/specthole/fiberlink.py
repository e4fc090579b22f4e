"""Multi-span fiber link: Manakov split-step propagation, ideal amplifiers, AWGN loading."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy.constants import h as PLANCK

from .txgen import DualPolWaveform
from .units import C_LIGHT, child_seed, db_to_lin, dbm_to_w

__all__ = [
    "FiberSpan",
    "LinkConfig",
    "SsfmConfig",
    "paper_span",
    "paper_link",
    "dispersion_coeffs",
    "linear_operator",
    "propagate_span",
    "propagate_link",
    "linear_reference",
    "load_awgn",
    "apply_link_noise",
    "accumulated_dispersion",
]

AMPLIFIER_POLICIES = ("noiselessFullRecovery", "noiseFigure")


@dataclass(frozen=True)
class FiberSpan:
    """One fiber span in datasheet units (alpha in dB/km, D in ps/nm/km, S in ps/nm^2/km)."""

    length: float = 100e3
    alpha_db_km: float = 0.22
    dispersion: float = 16.70
    dispersion_slope: float = 0.057
    gamma: float = 1.22e-3
    wavelength: float = 1550e-9

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("span length must be > 0")
        if self.alpha_db_km < 0:
            raise ValueError("attenuation must be >= 0")
        if self.gamma < 0:
            raise ValueError("nonlinear coefficient must be >= 0")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")

    @property
    def alpha(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha_db_km * np.log(10) / 10 / 1e3

    @property
    def loss_db(self) -> float:
        return self.alpha_db_km * self.length / 1e3


@dataclass(frozen=True)
class LinkConfig:
    spans: tuple[FiberSpan, ...] = field(default_factory=lambda: (FiberSpan(),) * 3)
    amplifier_policy: str = "noiselessFullRecovery"
    noise_figure_db: float | None = None
    lumped_noise_dbm: float | None = None
    noise_bandwidth: float = 100e9
    launch_power_dbm: float = 9.0
    simulation_bandwidth: float = 100e9

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))
        if self.amplifier_policy not in AMPLIFIER_POLICIES:
            raise ValueError(f"unknown amplifier policy {self.amplifier_policy!r}")
        if self.amplifier_policy == "noiseFigure" and self.noise_figure_db is None:
            raise ValueError("noiseFigure policy requires noise_figure_db")
        if self.noise_bandwidth <= 0 or self.simulation_bandwidth <= 0:
            raise ValueError("bandwidths must be > 0")

    @property
    def length(self) -> float:
        return float(sum(s.length for s in self.spans))


@dataclass(frozen=True)
class SsfmConfig:
    max_phase_per_step: float = 1e-3
    max_step: float = 1e3
    scheme: str = "symmetric"
    polarization_coupling: str = "manakov89"

    def __post_init__(self):
        if self.max_phase_per_step <= 0 or self.max_step <= 0:
            raise ValueError("step bounds must be > 0")
        if self.scheme != "symmetric":
            raise ValueError("only the symmetric scheme is implemented")
        if self.polarization_coupling not in ("manakov89", "scalarPerPol"):
            raise ValueError(f"unknown polarization coupling {self.polarization_coupling!r}")


def paper_span(**overrides) -> FiberSpan:
    """100 km of the characterized SSMF."""
    return FiberSpan(**overrides)


def paper_link(launch_power_dbm: float = 9.0, n_spans: int = 3, gamma: float = 1.22e-3,
               lumped_noise_dbm: float | None = None, **kw) -> LinkConfig:
    span = FiberSpan(gamma=gamma)
    return LinkConfig(spans=(span,) * n_spans, launch_power_dbm=launch_power_dbm,
                      lumped_noise_dbm=lumped_noise_dbm, **kw)


def dispersion_coeffs(span: FiberSpan) -> tuple[float, float]:
    """Return (beta2 [s^2/m], beta3 [s^3/m]) from D and S at the span wavelength."""
    lam = span.wavelength
    d_si = span.dispersion * 1e-6          # ps/(nm km) -> s/m^2
    s_si = span.dispersion_slope * 1e3     # ps/(nm^2 km) -> s/m^3
    k = lam**2 / (2 * np.pi * C_LIGHT)
    return -d_si * k, k**2 * (s_si + 2 * d_si / lam)


def accumulated_dispersion(link: LinkConfig) -> tuple[float, float]:
    """Total (D*L [ps/nm], S*L [ps/nm^2]) over the link."""
    return (float(sum(s.dispersion * s.length / 1e3 for s in link.spans)),
            float(sum(s.dispersion_slope * s.length / 1e3 for s in link.spans)))


def linear_operator(span: FiberSpan, sample_rate: float, n: int) -> np.ndarray:
    """Per-metre exponent of the linear step in numpy FFT order.

    exp(linear_operator * dz) multiplies the field spectrum; the real part is
    field loss (-alpha/2), the imaginary part the beta2/beta3 phase.
    """
    beta2, beta3 = dispersion_coeffs(span)
    w = 2 * np.pi * np.fft.fftfreq(n, 1.0 / sample_rate)
    return 1j * (beta2 / 2 * w**2 + beta3 / 6 * w**3) - span.alpha / 2


def _kerr_phase(field: np.ndarray, gamma: float, coupling: str) -> np.ndarray:
    p = np.abs(field) ** 2
    if coupling == "manakov89":
        return (8.0 / 9.0) * gamma * (p[0] + p[1])
    return gamma * p


def propagate_span(w: DualPolWaveform, span: FiberSpan, ssfm: SsfmConfig | None = None,
                   return_steps: bool = False):
    """Symmetric split-step integration of one span.

    Step size is ``min(max_step, max_phase_per_step / (g * P))`` where ``P`` is
    the current mean power of both polarizations and ``g`` the effective Kerr
    coefficient (8/9 gamma for Manakov). Consecutive linear half-steps are
    merged, so each step costs one inverse and one forward FFT.
    """
    ssfm = ssfm or SsfmConfig()
    n = len(w)
    lin = linear_operator(span, w.sample_rate, n)
    spec = sfft.fft(w.field, axis=-1)

    if span.gamma == 0:
        # linear steps commute: one exact step
        out = sfft.ifft(spec * np.exp(lin * span.length), axis=-1)
        return (w.with_field(out), [span.length]) if return_steps else w.with_field(out)

    g_eff = span.gamma * (8.0 / 9.0 if ssfm.polarization_coupling == "manakov89" else 1.0)
    z = 0.0
    carry = 0.0
    steps = []
    field = None
    while span.length - z > 1e-9 * span.length:
        p_mean = float(np.sum(np.abs(spec) ** 2)) / n**2
        if p_mean > 0:
            dz = min(ssfm.max_step, ssfm.max_phase_per_step / (g_eff * p_mean))
        else:
            dz = ssfm.max_step
        dz = min(dz, span.length - z)
        spec = spec * np.exp(lin * (carry + dz / 2))
        field = sfft.ifft(spec, axis=-1)
        field = field * np.exp(1j * _kerr_phase(field, span.gamma, ssfm.polarization_coupling) * dz)
        if not np.all(np.isfinite(field)):
            raise FloatingPointError(
                f"non-finite field at z={z:.1f} m; tighten max_phase_per_step/max_step")
        spec = sfft.fft(field, axis=-1)
        carry = dz / 2
        z += dz
        steps.append(dz)
    out = sfft.ifft(spec * np.exp(lin * carry), axis=-1)
    return (w.with_field(out), steps) if return_steps else w.with_field(out)


def _amplify(w: DualPolWaveform, span: FiberSpan, link: LinkConfig,
             rng: np.random.Generator | None) -> DualPolWaveform:
    gain = float(db_to_lin(span.loss_db))
    out = w.field * np.sqrt(gain)
    if link.amplifier_policy == "noiseFigure":
        nf = float(db_to_lin(link.noise_figure_db))
        nu = C_LIGHT / span.wavelength
        if gain > 1:
            n_sp = nf * gain / (2 * (gain - 1))
            psd_per_pol = (gain - 1) * n_sp * PLANCK * nu
            sigma2 = psd_per_pol * w.sample_rate
            noise = rng.normal(scale=np.sqrt(sigma2 / 2), size=(2, 2, len(w)))
            out = out + noise[0] + 1j * noise[1]
    return w.with_field(out)


def propagate_link(w: DualPolWaveform, link: LinkConfig, ssfm: SsfmConfig | None = None,
                   seed: int = 0) -> DualPolWaveform:
    """Propagate span by span, restoring the span loss after each span.

    With the ``noiseFigure`` policy each amplifier also adds ASE; ``seed``
    drives that noise. Lumped loading is not applied here (see
    :func:`apply_link_noise`).
    """
    rng = np.random.default_rng(child_seed(seed, "ase")) if link.amplifier_policy == "noiseFigure" else None
    for span in link.spans:
        w = propagate_span(w, span, ssfm)
        w = _amplify(w, span, link, rng)
    return w


def linear_reference(w: DualPolWaveform, link: LinkConfig) -> DualPolWaveform:
    """Noise-free, Kerr-free propagation of ``w`` through ``link``."""
    quiet = LinkConfig(spans=tuple(_linear_span(s) for s in link.spans),
                       amplifier_policy="noiselessFullRecovery",
                       launch_power_dbm=link.launch_power_dbm,
                       simulation_bandwidth=link.simulation_bandwidth)
    return propagate_link(w, quiet)


def _linear_span(s: FiberSpan) -> FiberSpan:
    return FiberSpan(length=s.length, alpha_db_km=s.alpha_db_km, dispersion=s.dispersion,
                     dispersion_slope=s.dispersion_slope, gamma=0.0, wavelength=s.wavelength)


def load_awgn(w: DualPolWaveform, p_lin_dbm: float | None, over_bandwidth: float | None = None,
              seed: int = 0) -> DualPolWaveform:
    """Add circular white Gaussian noise of total power ``p_lin_dbm`` (both pols).

    The noise is flat over ``|f| < over_bandwidth / 2`` and zero elsewhere.
    ``None`` or ``-inf`` leaves the waveform untouched.
    """
    if p_lin_dbm is None or np.isneginf(p_lin_dbm):
        return w
    over_bandwidth = w.sample_rate if over_bandwidth is None else over_bandwidth
    if over_bandwidth > w.sample_rate * (1 + 1e-12):
        raise ValueError("noise bandwidth exceeds the sample rate")
    n = len(w)
    f = w.freqs()
    band = (f >= -over_bandwidth / 2) & (f < over_bandwidth / 2)
    n_bins = int(np.count_nonzero(band))
    p_pol = float(dbm_to_w(p_lin_dbm)) / 2
    # mean|x|^2 = sum|X_k|^2 / n^2, spread evenly over the in-band bins
    sigma = np.sqrt(p_pol * n**2 / n_bins / 2)
    rng = np.random.default_rng(child_seed(seed, "awgn"))
    spec = np.zeros((2, n), dtype=complex)
    g = rng.normal(scale=sigma, size=(2, 2, n_bins))
    spec[:, band] = g[0] + 1j * g[1]
    return w.with_field(w.field + sfft.ifft(spec, axis=-1))


def apply_link_noise(w: DualPolWaveform, link: LinkConfig, seed: int) -> DualPolWaveform:
    """Lumped ASE loading at the link output, if configured."""
    return load_awgn(w, link.lumped_noise_dbm, link.noise_bandwidth, seed)
