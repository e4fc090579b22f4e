"""Hole-position scanning, noise PSD reconstruction and hole self-perturbation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .fiberlink import LinkConfig, SsfmConfig, apply_link_noise, linear_reference, propagate_link
from .osa import OsaConfig, Psd, estimate_psd, measure, out_of_band_floor, read_hole_psd
from .parallel import run_jobs
from .txgen import (DualPolWaveform, HoleSpec, SymbolSequence, TxConfig, generate_symbols,
                    hole_mask, insert_spectral_holes, transmit)
from .units import child_seed

__all__ = [
    "ScanPlan",
    "ScanRecord",
    "NoiseScanResult",
    "scan_iterations",
    "plan_scan",
    "run_scan",
    "reconstruct_noise_psd",
    "nli_field",
    "nli_psd",
    "flat_band_level",
    "hole_self_error",
    "self_error_reference",
]


@dataclass(frozen=True)
class ScanPlan:
    """Hole centre offsets to visit, all >= 0 for symmetric pairs.

    ``floor_band`` is the |f| range used for the out-of-band noise reference.
    """

    positions: tuple[float, ...]
    width: float = 1e9
    symmetric: bool = True
    guard_fraction: float = 0.3
    n_acquisitions: int = 5
    floor_band: tuple[float, float] = (30e9, 45e9)

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(float(p) for p in self.positions))
        object.__setattr__(self, "floor_band", tuple(self.floor_band))
        if not self.positions:
            raise ValueError("empty plan")
        if list(self.positions) != sorted(self.positions):
            raise ValueError("positions must be sorted")
        if self.symmetric and self.positions[0] < 0:
            raise ValueError("symmetric plans take non-negative offsets")
        if self.n_acquisitions < 1:
            raise ValueError("n_acquisitions must be >= 1")

    def holes(self) -> list[HoleSpec]:
        return [HoleSpec(f, self.width, self.symmetric) for f in self.positions]

    @property
    def n_spectra(self) -> int:
        """Distinct transmitted spectra the plan needs."""
        return len(self.positions)

    @property
    def single_hole_equivalents(self) -> int:
        if not self.symmetric:
            return len(self.positions)
        return sum(1 if f == 0 else 2 for f in self.positions)


def scan_iterations(symbol_rate: float, roll_off: float, width: float, symmetric: bool = False) -> int:
    """Spectra needed to tile the occupied band R(1+b) with holes of ``width``."""
    n = math.ceil(symbol_rate * (1 + roll_off) / width - 1e-9)
    return math.ceil(n / 2) if symmetric else n


def plan_scan(symbol_rate: float, roll_off: float, width: float, increment: float,
              half_range: float, include_carrier: bool = False, **kw) -> ScanPlan:
    """Symmetric-pair plan at ``increment, 2*increment, ...`` up to ``half_range``.

    The carrier offset is skipped unless ``include_carrier`` (a hole at 0 has
    no mirror and counts as one hole). Holes may extend one width past the
    occupied band edge so the outermost position can straddle it.
    """
    edge = symbol_rate * (1 + roll_off) / 2
    if half_range > edge + width * (1 + 1e-9):
        raise ValueError(f"half_range {half_range:.4g} Hz exceeds the band edge {edge:.4g} Hz + one hole width")
    if increment <= 0 or width <= 0:
        raise ValueError("increment and width must be > 0")
    n = int(math.floor(half_range / increment + 1e-9))
    positions = [k * increment for k in range(0 if include_carrier else 1, n + 1)]
    if not positions:
        raise ValueError("empty plan: half_range is below one increment")
    return ScanPlan(tuple(positions), width=width, **kw)


@dataclass(frozen=True)
class ScanRecord:
    f_h: float
    mean_psd: float
    std_psd: float
    n_acquisitions: int
    readings: tuple[float, ...]
    floor_psd: float
    received_power: float

    @property
    def std_db(self) -> float:
        r = np.asarray(self.readings)
        return float(np.std(10 * np.log10(r))) if r.size > 1 else 0.0


@dataclass(frozen=True)
class NoiseScanResult:
    records: tuple[ScanRecord, ...]
    launch_power_dbm: float
    width: float
    symmetric: bool = True
    seed: int = 0
    tx: dict = field(default_factory=dict)
    link: dict = field(default_factory=dict)

    @property
    def positions(self) -> np.ndarray:
        return np.array([r.f_h for r in self.records])

    @property
    def mean_psd(self) -> np.ndarray:
        return np.array([r.mean_psd for r in self.records])

    @property
    def floor_psd(self) -> float:
        return float(np.mean([r.floor_psd for r in self.records]))


def _scan_position(args):
    idx, hole, plan, tx, link, osa, ssfm, seed = args
    sym = generate_symbols(tx, seed=child_seed(seed, "position", idx))
    w, _ = transmit(tx, link.launch_power_dbm, [hole], symbols=sym)
    out = propagate_link(w, link, ssfm, seed=child_seed(seed, "position", idx, "ase"))
    readings, floors, powers = [], [], []
    for k in range(plan.n_acquisitions):
        noisy = apply_link_noise(out, link, child_seed(seed, "position", idx, "acq", k))
        psd = measure(noisy, osa, total_power=noisy.power)
        readings.append(read_hole_psd(psd, hole, plan.guard_fraction))
        floors.append(out_of_band_floor(psd, *plan.floor_band))
        powers.append(noisy.power)
    r = np.asarray(readings)
    return ScanRecord(f_h=hole.f_h, mean_psd=float(r.mean()), std_psd=float(r.std()),
                      n_acquisitions=plan.n_acquisitions, readings=tuple(readings),
                      floor_psd=float(np.mean(floors)), received_power=float(np.mean(powers)))


def run_scan(plan: ScanPlan, tx: TxConfig, link: LinkConfig, osa: OsaConfig | None = None,
             seed: int = 0, ssfm: SsfmConfig | None = None, jobs: int = 1) -> NoiseScanResult:
    """Measure the in-hole PSD at every planned position.

    Each position gets its own symbol draw; within a position the propagated
    field is reused and only the loaded noise is redrawn per acquisition.
    """
    osa = osa or OsaConfig()
    args = [(i, h, plan, tx, link, osa, ssfm, seed) for i, h in enumerate(plan.holes())]
    records = run_jobs(_scan_position, args, jobs)
    return NoiseScanResult(tuple(records), launch_power_dbm=link.launch_power_dbm,
                           width=plan.width, symmetric=plan.symmetric, seed=seed,
                           tx=asdict(tx), link=_link_snapshot(link))


def _link_snapshot(link: LinkConfig) -> dict:
    d = asdict(link)
    d["spans"] = [asdict(s) for s in link.spans]
    return d


def reconstruct_noise_psd(res: NoiseScanResult, grid_step: float = 50e6,
                          extend_to: float | None = None, subtract_floor: bool = False) -> Psd:
    """Mirror the per-position readings and interpolate them in dB.

    ``extend_to`` holds the outermost reading flat out to +-extend_to.
    ``subtract_floor`` removes the out-of-band (white) floor first, leaving
    the signal-dependent part.
    """
    if len(res.records) < 2:
        raise ValueError("need at least 2 scan positions")
    f = res.positions
    v = res.mean_psd - (res.floor_psd if subtract_floor else 0.0)
    if np.any(v <= 0):
        raise ValueError("non-positive PSD readings cannot be interpolated in dB")
    if res.symmetric:
        neg = f > 0
        f = np.concatenate([-f[neg][::-1], f])
        v = np.concatenate([v[neg][::-1], v])
    order = np.argsort(f)
    f, v = f[order], v[order]
    hi = max(abs(f[0]), abs(f[-1]))
    if extend_to is not None:
        hi = max(hi, extend_to)
    n = int(math.ceil(hi / grid_step))
    grid = np.arange(-n, n + 1) * grid_step
    vals = 10 ** (np.interp(grid, f, 10 * np.log10(v)) / 10)
    return Psd(grid, vals, n_averages=int(sum(r.n_acquisitions for r in res.records)))


# --------------------------------------------------------------------------
# hole self-perturbation


def nli_field(w: DualPolWaveform, link: LinkConfig, ssfm: SsfmConfig | None = None):
    """Return (nli, output): the Kerr-induced part of the link output.

    The Kerr-free reference propagated from the same input is fitted to the
    output by one complex scalar per polarization (removing the mean
    nonlinear phase rotation) and subtracted.
    """
    quiet = LinkConfig(spans=link.spans, amplifier_policy="noiselessFullRecovery",
                       launch_power_dbm=link.launch_power_dbm,
                       simulation_bandwidth=link.simulation_bandwidth)
    out = propagate_link(w, quiet, ssfm)
    lin = linear_reference(w, quiet)
    a = np.sum(out.field * np.conj(lin.field), axis=1) / np.sum(np.abs(lin.field) ** 2, axis=1)
    return out.with_field(out.field - a[:, None] * lin.field), out


def nli_psd(tx: TxConfig, link: LinkConfig, osa: OsaConfig, holes=(), ssfm: SsfmConfig | None = None,
            symbols: SymbolSequence | None = None, power_reference: str = "launch",
            return_input: bool = False):
    """NLI PSD of the transmitted signal, optionally carved with ``holes``.

    ``power_reference="launch"`` renormalizes the carved signal to the launch
    power, as a power-controlled transmitter would; ``"spectral"`` carves the
    already power-set hole-free waveform, so the holes only remove power.
    With ``return_input`` the launched waveform is returned as well.
    """
    symbols = symbols if symbols is not None else generate_symbols(tx)
    if power_reference == "launch":
        w, _ = transmit(tx, link.launch_power_dbm, holes, symbols=symbols)
    elif power_reference == "spectral":
        w, _ = transmit(tx, link.launch_power_dbm, symbols=symbols)
        if holes:
            w = insert_spectral_holes(w, holes)
    else:
        raise ValueError(f"unknown power_reference {power_reference!r}")
    nli, _ = nli_field(w, link, ssfm)
    p = estimate_psd(nli, osa)
    return (p, w) if return_input else p


def flat_band_level(w: DualPolWaveform, symbol_rate: float, roll_off: float, holes=()) -> float:
    """Mean signal PSD (W/Hz) over the flat top |f| <= R(1-b)/2, hole bins excluded."""
    spec = np.sum(np.abs(np.fft.fft(w.field, axis=-1)) ** 2, axis=0) / (len(w) * w.sample_rate)
    f = w.freqs()
    keep = np.abs(f) <= symbol_rate * (1 - roll_off) / 2
    if holes:
        keep &= ~hole_mask(f, holes)
    if not np.any(keep):
        raise ValueError("no hole-free flat-band bins left")
    return float(np.mean(spec[keep]))


def hole_self_error(f_h: float, width: float, tx: TxConfig, link: LinkConfig, osa_hi_res: OsaConfig,
                    ssfm: SsfmConfig | None = None, reference: tuple[Psd, float] | None = None,
                    symbols: SymbolSequence | None = None, readout_fraction: float = 0.3,
                    normalization: str = "relative") -> float:
    """NLI PSD error in dB at the hole: S_nli(f_h) minus S_nli_with_holes(f_h).

    Both runs use the same symbols and the same launch power. With
    ``normalization="relative"`` each NLI PSD is expressed relative to the
    flat-band PSD of its own launched signal, which carving at constant power
    raises by R/(R - 2*width); ``"absolute"`` compares the raw NLI PSDs and
    ``"spectral"`` carves without renormalizing the power. The readout
    averages the central ``readout_fraction`` of the hole (at least the
    closest bin) on both mirror sides. ``reference`` is the hole-free
    (NLI PSD, flat-band level) pair, if already known.
    """
    if link.lumped_noise_dbm is not None or link.amplifier_policy != "noiselessFullRecovery":
        raise ValueError("the self-error needs a noiseless link to isolate the NLI")
    if normalization not in ("relative", "absolute", "spectral"):
        raise ValueError(f"unknown normalization {normalization!r}")
    symbols = symbols if symbols is not None else generate_symbols(tx)
    hole = HoleSpec(f_h, width, True)
    if reference is None:
        reference = self_error_reference(tx, link, osa_hi_res, ssfm, symbols)
    ref_psd, ref_level = reference
    mode = "spectral" if normalization == "spectral" else "launch"
    carved, w = nli_psd(tx, link, osa_hi_res, [hole], ssfm, symbols, mode, return_input=True)
    eps = 10 * np.log10(_centre_reading(ref_psd, hole, readout_fraction)
                        / _centre_reading(carved, hole, readout_fraction))
    if normalization == "relative":
        level = flat_band_level(w, tx.symbol_rate, tx.roll_off, [hole])
        eps += 10 * np.log10(level / ref_level)
    return float(eps)


def self_error_reference(tx: TxConfig, link: LinkConfig, osa_hi_res: OsaConfig,
                         ssfm: SsfmConfig | None = None, symbols: SymbolSequence | None = None):
    """Hole-free (NLI PSD, flat-band level) pair shared by a grid of self-errors."""
    symbols = symbols if symbols is not None else generate_symbols(tx)
    p, w = nli_psd(tx, link, osa_hi_res, (), ssfm, symbols, return_input=True)
    return p, flat_band_level(w, tx.symbol_rate, tx.roll_off)


def _centre_reading(p: Psd, hole: HoleSpec, fraction: float) -> float:
    half = max(fraction * hole.width / 2, 0.51 * p.df)
    return read_hole_psd(p, HoleSpec(hole.f_h, 2 * half, hole.symmetric), 0.0)
