"""Transmitter: PDM-QPSK symbols, RRC shaping, spectral holes, DAC, launch power.

Pulse shaping is done in the frequency domain over one periodic block, so the
waveform is exactly cyclic. Every later FFT-based stage (hole carving, SSFM,
periodogram) therefore sees no edge effects.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .units import child_seed, dbm_to_w

__all__ = [
    "TxConfig",
    "SymbolSequence",
    "DualPolWaveform",
    "HoleSpec",
    "QPSK_POINTS",
    "de_bruijn",
    "qpsk_gray",
    "generate_symbols",
    "raised_cosine_spectrum",
    "pulse_shape",
    "shape_waveform",
    "hole_mask",
    "insert_spectral_holes",
    "quantize_dac",
    "set_launch_power",
    "transmit",
]

QPSK_POINTS = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2)
GENERATORS = ("seededUniform", "deBruijn")


@dataclass(frozen=True)
class TxConfig:
    """Transmitter settings.

    ``block_length = n_symbols * samples_per_symbol`` is one period of the
    emulated DAC memory and must be a power of two.
    """

    symbol_rate: float = 32.5e9
    roll_off: float = 0.2
    samples_per_symbol: float = 4.0
    n_symbols: int = 2**15
    dac_bits: int | None = 8
    seed: int = 1
    generator: str = "seededUniform"

    def __post_init__(self):
        if self.symbol_rate <= 0:
            raise ValueError("symbol_rate must be > 0")
        if not 0.0 <= self.roll_off <= 1.0:
            raise ValueError("roll_off must lie in [0, 1]")
        if self.samples_per_symbol < 2:
            raise ValueError("samples_per_symbol must be >= 2")
        if self.samples_per_symbol * self.symbol_rate <= self.symbol_rate * (1 + self.roll_off):
            raise ValueError("sample rate does not cover the occupied band R(1+roll_off)")
        n = self.n_symbols * self.samples_per_symbol
        if n != int(n):
            raise ValueError("n_symbols * samples_per_symbol must be an integer")
        n = int(n)
        if n < 2 or n & (n - 1):
            raise ValueError(f"block_length {n} is not a power of two")
        if self.dac_bits is not None and self.dac_bits < 2:
            raise ValueError("dac_bits must be >= 2 (or None to disable)")
        if self.generator not in GENERATORS:
            raise ValueError(f"unsupported generator {self.generator!r}")

    @property
    def dac_rate(self) -> float:
        return self.symbol_rate * self.samples_per_symbol

    @property
    def block_length(self) -> int:
        return int(self.n_symbols * self.samples_per_symbol)

    @property
    def occupied_bandwidth(self) -> float:
        return self.symbol_rate * (1 + self.roll_off)


@dataclass(frozen=True)
class SymbolSequence:
    """Per-polarization QPSK symbols, shape (2, n)."""

    symbols: np.ndarray
    generator: str = "seededUniform"

    def __post_init__(self):
        s = np.asarray(self.symbols)
        if s.ndim != 2 or s.shape[0] != 2:
            raise ValueError("symbols must have shape (2, n)")

    @property
    def x(self) -> np.ndarray:
        return self.symbols[0]

    @property
    def y(self) -> np.ndarray:
        return self.symbols[1]

    def __len__(self) -> int:
        return self.symbols.shape[1]


@dataclass(frozen=True)
class DualPolWaveform:
    """Complex baseband field of both polarizations (sqrt(W) units).

    ``field`` has shape (2, n): row 0 is X, row 1 is Y.
    """

    field: np.ndarray
    sample_rate: float
    center_frequency_offset: float = 0.0

    def __post_init__(self):
        f = self.field
        if f.ndim != 2 or f.shape[0] != 2:
            raise ValueError("field must have shape (2, n)")
        if f.shape[1] < 2:
            raise ValueError("waveform needs at least 2 samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")

    @classmethod
    def from_pols(cls, x, y, sample_rate: float, center_frequency_offset: float = 0.0):
        x = np.asarray(x, dtype=complex)
        y = np.asarray(y, dtype=complex)
        if x.shape != y.shape:
            raise ValueError("x and y polarizations must have equal length")
        return cls(np.stack([x, y]), sample_rate, center_frequency_offset)

    @property
    def x(self) -> np.ndarray:
        return self.field[0]

    @property
    def y(self) -> np.ndarray:
        return self.field[1]

    def __len__(self) -> int:
        return self.field.shape[1]

    @property
    def power(self) -> float:
        """Mean of |x|^2 + |y|^2 in W."""
        return float(np.mean(np.sum(np.abs(self.field) ** 2, axis=0)))

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.field) ** 2))

    def freqs(self) -> np.ndarray:
        """FFT bin centre frequencies in numpy order."""
        return np.fft.fftfreq(len(self), 1.0 / self.sample_rate)

    def with_field(self, field: np.ndarray) -> "DualPolWaveform":
        return replace(self, field=field)


@dataclass(frozen=True)
class HoleSpec:
    """A spectral hole of width ``width`` centred at ``f_h`` (Hz offsets)."""

    f_h: float
    width: float
    symmetric: bool = True

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("hole width must be > 0")

    def intervals(self) -> list[tuple[float, float, bool]]:
        """(lo, hi, mirrored) bounds; mirrored intervals are (lo, hi]."""
        lo, hi = self.f_h - self.width / 2, self.f_h + self.width / 2
        out = [(lo, hi, False)]
        if self.symmetric and self.f_h != 0:
            out.append((-hi, -lo, True))
        return out

    def check_band(self, sample_rate: float) -> None:
        if abs(self.f_h) + self.width / 2 > sample_rate / 2:
            raise ValueError(
                f"hole at {self.f_h:.4g} Hz, width {self.width:.4g} Hz lies outside "
                f"the representable band +-{sample_rate / 2:.4g} Hz"
            )


# --------------------------------------------------------------------------
# symbols


def de_bruijn(order: int, k: int = 2) -> np.ndarray:
    """Cyclic de Bruijn sequence B(k, order) via Lyndon-word concatenation."""
    a = [0] * (k * order)
    seq: list[int] = []

    def db(t, p):
        if t > order:
            if order % p == 0:
                seq.extend(a[1 : p + 1])
            return
        a[t] = a[t - p]
        db(t + 1, p)
        for j in range(a[t - p] + 1, k):
            a[t] = j
            db(t + 1, t)

    db(1, 1)
    return np.array(seq, dtype=np.int8)


def qpsk_gray(b0: np.ndarray, b1: np.ndarray) -> np.ndarray:
    """Gray-mapped unit-energy QPSK: bit 0 drives I, bit 1 drives Q."""
    return ((1 - 2 * np.asarray(b0, float)) + 1j * (1 - 2 * np.asarray(b1, float))) / np.sqrt(2)


def generate_symbols(cfg: TxConfig, n: int | None = None, generator: str | None = None,
                     seed: int | None = None) -> SymbolSequence:
    """Draw ``n`` QPSK symbols per polarization.

    ``seededUniform`` uses independent bit streams per polarization derived
    from the seed. ``deBruijn`` maps sliding bit pairs ``(b[k], b[k+1])`` of a
    binary de Bruijn sequence of order ``log2(n)`` (16 when ``n`` is not a power
    of two, tiled cyclically); Y is a seed-dependent cyclic shift of X.
    """
    n = cfg.n_symbols if n is None else int(n)
    generator = cfg.generator if generator is None else generator
    seed = cfg.seed if seed is None else seed
    if n < 1:
        raise ValueError("n must be >= 1")
    if generator == "seededUniform":
        pols = []
        for pol in range(2):
            rng = np.random.default_rng(child_seed(seed, "symbols", pol))
            bits = rng.integers(0, 2, size=(2, n))
            pols.append(qpsk_gray(bits[0], bits[1]))
        return SymbolSequence(np.stack(pols), generator)
    if generator == "deBruijn":
        order = int(np.log2(n)) if n >= 4 and n & (n - 1) == 0 else 16
        bits = de_bruijn(order)
        period = bits.size
        idx = np.arange(n) % period
        sx = qpsk_gray(bits[idx], bits[(idx + 1) % period])
        shift = 1 + child_seed(seed, "debruijn-shift") % (period - 1)
        sy = qpsk_gray(bits[(idx + shift) % period], bits[(idx + shift + 1) % period])
        return SymbolSequence(np.stack([sx, sy]), generator)
    raise ValueError(f"unsupported generator {generator!r}")


# --------------------------------------------------------------------------
# pulse shaping


def raised_cosine_spectrum(f, symbol_rate: float, roll_off: float) -> np.ndarray:
    """Raised-cosine power response, 1 in the flat band, 0 beyond R(1+b)/2.

    Its folded sum over multiples of the symbol rate is exactly 1 (Nyquist);
    for ``roll_off=0`` the band edge takes the value 1/2.
    """
    f = np.abs(np.asarray(f, dtype=float))
    r = symbol_rate
    b = roll_off
    out = np.zeros_like(f)
    if b == 0:
        out[f < r / 2] = 1.0
        out[np.isclose(f, r / 2, rtol=0, atol=r * 1e-12)] = 0.5
        return out
    f1, f2 = r * (1 - b) / 2, r * (1 + b) / 2
    out[f <= f1] = 1.0
    roll = (f > f1) & (f < f2)
    out[roll] = 0.5 * (1 + np.cos(np.pi / (b * r) * (f[roll] - f1)))
    return out


def pulse_shape(symbols: np.ndarray, samples_per_symbol: float, roll_off: float) -> np.ndarray:
    """Periodic RRC shaping of a (..., n) symbol array, no normalization.

    The output has ``n * samples_per_symbol`` samples per row. Symbol ``k``
    sits at sample ``k * samples_per_symbol``; a matched filter followed by
    sampling at those instants returns the symbols unchanged.
    """
    symbols = np.atleast_1d(np.asarray(symbols, dtype=complex))
    n = symbols.shape[-1]
    m = int(round(n * samples_per_symbol))
    spec = np.fft.fft(symbols, axis=-1)
    # output bins share the symbol-DFT spacing R/n, so bin j replicates bin j mod n
    j = np.fft.fftfreq(m, 1.0 / m).astype(int)
    f_norm = j / n  # in units of the symbol rate
    h = np.sqrt(raised_cosine_spectrum(f_norm, 1.0, roll_off))
    out_spec = spec[..., j % n] * h * (m / n)
    return np.fft.ifft(out_spec, axis=-1)


def shape_waveform(sym: SymbolSequence, cfg: TxConfig) -> DualPolWaveform:
    """RRC-shape both polarizations at ``cfg.dac_rate``; unit total mean power."""
    n_out = len(sym) * cfg.samples_per_symbol
    if n_out != int(n_out):
        raise ValueError("symbol count times samples_per_symbol must be an integer")
    if len(sym) < 2:
        raise ValueError("block too short: need at least 2 symbols")
    field = pulse_shape(sym.symbols, cfg.samples_per_symbol, cfg.roll_off)
    w = DualPolWaveform(field, cfg.dac_rate)
    return w.with_field(field / np.sqrt(w.power))


# --------------------------------------------------------------------------
# spectral holes


def hole_mask(freqs: np.ndarray, holes: Sequence[HoleSpec]) -> np.ndarray:
    """Boolean mask of FFT bins whose centre lies inside any hole.

    Primary intervals are half-open [lo, hi); mirror intervals are the exact
    negation (-hi, -lo] so a symmetric pair removes a conjugate-symmetric set.
    """
    mask = np.zeros(freqs.shape, dtype=bool)
    for hole in holes:
        for lo, hi, mirrored in hole.intervals():
            if mirrored:
                mask |= (freqs > lo) & (freqs <= hi)
            else:
                mask |= (freqs >= lo) & (freqs < hi)
    return mask


def insert_spectral_holes(w: DualPolWaveform, holes: Sequence[HoleSpec]) -> DualPolWaveform:
    """Zero the FFT bins of every hole on both polarizations."""
    for hole in holes:
        hole.check_band(w.sample_rate)
    spec = np.fft.fft(w.field, axis=-1)
    if holes:
        spec[:, hole_mask(w.freqs(), holes)] = 0.0
    return w.with_field(np.fft.ifft(spec, axis=-1))


# --------------------------------------------------------------------------
# DAC and power


def _quantize_real(v: np.ndarray, levels: int) -> np.ndarray:
    m = np.max(np.abs(v))
    if m == 0:
        return v.copy()
    k = np.rint((v / m + 1.0) * (levels - 1) / 2.0)
    return m * (2.0 * k / (levels - 1) - 1.0)


def quantize_dac(w: DualPolWaveform, bits: int) -> DualPolWaveform:
    """Uniform mid-rise quantizer with 2**bits levels over +-max per tributary."""
    if bits < 2:
        raise ValueError("bits must be >= 2")
    levels = 2**bits
    out = np.empty_like(w.field)
    for p in range(2):
        out[p] = _quantize_real(w.field[p].real, levels) + 1j * _quantize_real(
            w.field[p].imag, levels)
    return w.with_field(out)


def set_launch_power(w: DualPolWaveform, p_dbm: float) -> DualPolWaveform:
    """Scale the field so that mean(|x|^2 + |y|^2) equals ``p_dbm``."""
    p = w.power
    if not np.isfinite(p) or p <= 0:
        raise ValueError("cannot set the power of a zero-energy waveform")
    return w.with_field(w.field * np.sqrt(float(dbm_to_w(p_dbm)) / p))


def transmit(cfg: TxConfig, p_dbm: float, holes: Sequence[HoleSpec] = (),
             symbols: SymbolSequence | None = None) -> tuple[DualPolWaveform, SymbolSequence]:
    """Full TX chain: symbols, shaping, holes, DAC, launch power.

    Holes are carved before quantization, as a real transmitter would.
    """
    if symbols is None:
        symbols = generate_symbols(cfg)
    w = shape_waveform(symbols, cfg)
    if holes:
        w = insert_spectral_holes(w, holes)
    if cfg.dac_bits is not None:
        w = quantize_dac(w, cfg.dac_bits)
    return set_launch_power(w, p_dbm), symbols
