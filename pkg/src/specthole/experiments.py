"""Figure-reproduction experiments built from the simulation modules.

Every experiment returns an :class:`ExperimentResult` holding domain objects
(PSDs in W/Hz, scans, SNR reports); conversion to dB happens at export.
Independent inner jobs (scan positions, power points, self-error cells) go
through :func:`run_jobs`, so results never depend on the worker count.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (CalibrationConstants, SnrRecord, SnrReport, combine_snr, fit_loglog_slope,
                       optimum_power, signal_power_in_band, snr_from_noise_psd)
from .coherentrx import ConstellationReport, RxConfig, add_transceiver_noise, receive
from .fiberlink import (LinkConfig, SsfmConfig, accumulated_dispersion, apply_link_noise,
                        load_awgn, propagate_link)
from .holescan import (NoiseScanResult, hole_self_error, nli_field, plan_scan,
                       reconstruct_noise_psd, run_scan, self_error_reference)
from .osa import OsaConfig, Psd, measure, osnr_out_of_band, out_of_band_floor, read_hole_psd
from .parallel import run_jobs
from .txgen import HoleSpec, TxConfig, generate_symbols, transmit
from .units import child_seed, dbm_to_w

__all__ = [
    "ScanSettings",
    "EpsCell",
    "ExperimentResult",
    "rx_for_link",
    "noise_psd_truth",
    "sweep_point",
    "run_fig1",
    "run_fig3",
    "run_fig4",
    "run_fig5",
    "run_single_scan",
    "run_custom",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScanSettings:
    """Scan geometry and the per-experiment grids."""

    width: float = 1e9
    increment: float = 2e9
    half_range: float = 20e9
    n_acquisitions: int = 5
    guard_fraction: float = 0.3
    floor_band: tuple[float, float] = (30e9, 45e9)
    powers_dbm: tuple[float, ...] = (5.0, 7.0, 9.0, 11.0, 13.0)
    eps_widths: tuple[float, ...] = (0.5e9, 1e9, 2e9, 3e9)
    eps_positions: tuple[float, ...] = (2e9, 6e9, 10e9)
    eps_points: int = 2**13
    eps_power_dbm: float = 13.0
    fig1_positions: tuple[float, ...] = (4e9, 12e9)
    fig1_osnr_db: tuple[float | None, ...] = (None, 24.3, 14.8)
    constellation_dump: int = 4096

    def __post_init__(self):
        for name in ("powers_dbm", "eps_widths", "eps_positions", "fig1_positions", "fig1_osnr_db",
                     "floor_band"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.width <= 0 or self.increment <= 0 or self.half_range <= 0:
            raise ValueError("width, increment and half_range must be > 0")
        if self.n_acquisitions < 1:
            raise ValueError("n_acquisitions must be >= 1")

    def plan(self, tx: TxConfig):
        return plan_scan(tx.symbol_rate, tx.roll_off, self.width, self.increment, self.half_range,
                         guard_fraction=self.guard_fraction, n_acquisitions=self.n_acquisitions,
                         floor_band=self.floor_band)


@dataclass(frozen=True)
class EpsCell:
    f_h: float
    width: float
    eps_db: float


@dataclass
class ExperimentResult:
    experiment: str
    seed: int
    psds: dict[str, Psd] = field(default_factory=dict)
    scans: dict[str, NoiseScanResult] = field(default_factory=dict)
    snr: SnrReport | None = None
    eps: list[EpsCell] = field(default_factory=list)
    constellations: dict[str, np.ndarray] = field(default_factory=dict)
    reports: dict[str, ConstellationReport] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    complete: bool = True


def _pkey(p_dbm: float) -> str:
    return f"{p_dbm:g}dBm"


def rx_for_link(rx: RxConfig, link: LinkConfig) -> RxConfig:
    """Receiver whose CD compensation matches the link's accumulated dispersion."""
    d, s = accumulated_dispersion(link)
    return replace(rx, cd_total=d, cd_slope_total=s, wavelength=link.spans[0].wavelength)


def noise_psd_truth(nli: Psd, link: LinkConfig) -> Psd:
    """Simulated noise PSD: the NLI estimate plus the flat lumped loading."""
    if link.lumped_noise_dbm is None:
        return nli
    ase = float(dbm_to_w(link.lumped_noise_dbm)) / link.noise_bandwidth
    band = (nli.freq >= -link.noise_bandwidth / 2) & (nli.freq < link.noise_bandwidth / 2)
    return replace(nli, values=nli.values + ase * band)


def _quiet(link: LinkConfig) -> LinkConfig:
    return replace(link, amplifier_policy="noiselessFullRecovery", lumped_noise_dbm=None)


# --------------------------------------------------------------------------
# one launch power end to end


def sweep_point(p_dbm: float, tx: TxConfig, link: LinkConfig, osa: OsaConfig, rx: RxConfig,
                settings: ScanSettings, cal: CalibrationConstants, seed: int,
                ssfm: SsfmConfig | None = None, jobs: int = 1, with_scan: bool = True) -> dict:
    """Hole scan, constellation SNR and simulated SNR at one launch power.

    The constellation path demodulates the hole-free signal; transceiver
    noise matching ``cal`` is added at the receiver input. The same symbol
    seeds are used at every power so that power trends are not masked by
    pattern-to-pattern NLI fluctuations.
    """
    link = replace(link, launch_power_dbm=p_dbm)
    out: dict = {"p_dbm": p_dbm}
    n_const = max(tx.n_symbols, 1 << max(0, math.ceil(math.log2(rx.eval_symbols or 1))))
    ctx = replace(tx, n_symbols=n_const)
    sym = generate_symbols(ctx, seed=child_seed(seed, "constellation"))
    w, _ = transmit(ctx, p_dbm, symbols=sym)
    nli, clean = nli_field(w, link, ssfm)
    nli_p = measure(nli, osa)
    truth = noise_psd_truth(nli_p, link)
    # Kerr-free coherent signal power
    p_coh = w.power - nli.power
    snr_sim_opt = snr_from_noise_psd(truth, p_coh, tx.symbol_rate, tx.roll_off)
    out.update(nli_psd=nli_p, truth_psd=truth, snr_sim_optical_db=snr_sim_opt,
               snr_sim_db=combine_snr(snr_sim_opt, cal),
               # NLI-to-launch ratio: the pure P^-2 law of the Kerr term
               snr_nli_only_db=snr_from_noise_psd(nli_p, w.power, tx.symbol_rate, tx.roll_off))
    noisy = apply_link_noise(clean, link, child_seed(seed, "constellation", "ase"))
    spectrum = measure(noisy, osa, total_power=noisy.power)
    out["spectrum"] = spectrum
    if with_scan:
        scan = run_scan(settings.plan(tx), tx, link, osa, child_seed(seed, "scan"), ssfm, jobs)
        recon = reconstruct_noise_psd(scan, extend_to=tx.occupied_bandwidth / 2)
        # signal read off the hole-free spectrum, net of the reconstructed noise
        p_sig = signal_power_in_band(spectrum, recon, tx.symbol_rate, tx.roll_off)
        snr_opt = snr_from_noise_psd(recon, p_sig, tx.symbol_rate, tx.roll_off)
        out.update(scan=scan, recon=recon, snr_hole_optical_db=snr_opt,
                   snr_hole_db=combine_snr(snr_opt, cal))
    txrx_db = None if math.isinf(cal.snr_txrx_inv_db) else -cal.snr_txrx_inv_db
    noisy = add_transceiver_noise(noisy, txrx_db, tx.symbol_rate, child_seed(seed, "constellation", "txrx"))
    rep, rx_sym = receive(noisy, rx_for_link(rx, link), tx.symbol_rate, tx.roll_off, sym,
                          return_symbols=True)
    out.update(report=rep, rx_symbols=rx_sym[:, : settings.constellation_dump])
    log.info("%g dBm: hole %s dB, constellation %.2f dB, simulated %.2f dB", p_dbm,
             f"{out['snr_hole_db']:.2f}" if with_scan else "-", rep.snr_db, out["snr_sim_db"])
    return out


# --------------------------------------------------------------------------
# experiments


def run_fig1(tx: TxConfig, link: LinkConfig, osa: OsaConfig, settings: ScanSettings,
             seed: int, ssfm: SsfmConfig | None = None, jobs: int = 1) -> ExperimentResult:
    """Holes at the configured offsets under several white-noise loads.

    Each load is set from a target out-of-band OSNR (12.5 GHz reference);
    ``None`` means no added noise. The link is run Kerr-free.
    """
    res = ExperimentResult("fig1", seed)
    holes = [HoleSpec(f, settings.width, True) for f in settings.fig1_positions]
    lin_link = replace(link, spans=tuple(replace(s, gamma=0.0) for s in link.spans), lumped_noise_dbm=None)
    w, _ = transmit(tx, link.launch_power_dbm, holes, symbols=generate_symbols(tx, seed=child_seed(seed, "fig1")))
    out = propagate_link(w, lin_link, ssfm)
    edge = tx.occupied_bandwidth
    loads = []
    for i, osnr in enumerate(settings.fig1_osnr_db):
        if osnr is None:
            p_lin = None
        else:
            n0 = out.power / (10 ** (osnr / 10) * 12.5e9)
            p_lin = 10 * math.log10(n0 * link.noise_bandwidth) + 30
        waves = [load_awgn(out, p_lin, link.noise_bandwidth, child_seed(seed, "fig1", i, k))
                 for k in range(settings.n_acquisitions)]
        psd = measure(waves, osa, total_power=float(np.mean([x.power for x in waves])))
        key = "no_load" if osnr is None else f"osnr_{osnr:g}dB"
        res.psds[key] = psd
        floor = out_of_band_floor(psd, *settings.floor_band)
        loads.append({
            "load": key,
            "target_osnr_db": osnr,
            "p_lin_dbm": p_lin,
            "osnr_db": osnr_out_of_band(psd, edge, sum(settings.floor_band) / 2,
                                        ref_window=settings.floor_band[1] - settings.floor_band[0]),
            "floor_w_per_hz": floor,
            "hole_w_per_hz": {f"{h.f_h:g}": read_hole_psd(psd, h, settings.guard_fraction) for h in holes},
        })
    res.summary["loads"] = loads
    return res


def _eps_cell(args):
    f_h, width, tx, link, osa, ssfm, sym, reference = args
    return EpsCell(f_h, width, hole_self_error(f_h, width, tx, link, osa, ssfm, reference, sym))


def run_fig3(tx: TxConfig, link: LinkConfig, settings: ScanSettings, seed: int,
             ssfm: SsfmConfig | None = None, jobs: int = 1) -> ExperimentResult:
    """Hole self-error over the width x offset grid on a noiseless link."""
    res = ExperimentResult("fig3", seed)
    link = replace(_quiet(link), launch_power_dbm=settings.eps_power_dbm)
    osa = OsaConfig(rbw=None, window_points=settings.eps_points)
    sym = generate_symbols(tx, seed=child_seed(seed, "fig3"))
    reference = self_error_reference(tx, link, osa, ssfm, sym)
    args = [(f, wd, tx, link, osa, ssfm, sym, reference)
            for wd in settings.eps_widths for f in settings.eps_positions]
    res.eps = run_jobs(_eps_cell, args, jobs)
    res.psds["nli_reference"] = reference[0]
    res.summary["flat_band_level_w_per_hz"] = reference[1]
    return res


def run_fig4(tx: TxConfig, link: LinkConfig, osa: OsaConfig, rx: RxConfig, settings: ScanSettings,
             cal: CalibrationConstants, seed: int, ssfm: SsfmConfig | None = None,
             jobs: int = 1, powers: tuple[float, ...] = (9.0, 11.0, 13.0)) -> ExperimentResult:
    """Scans at several powers next to the simulated hole-free noise PSD."""
    res = ExperimentResult("fig4", seed)
    for p in powers:
        pt = sweep_point(p, tx, link, osa, rx, settings, cal, seed, ssfm, jobs)
        _store_point(res, pt)
    res.summary["positions"] = _position_table(res, settings.guard_fraction)
    return res


def _store_point(res: ExperimentResult, pt: dict):
    k = _pkey(pt["p_dbm"])
    if "scan" in pt:
        res.scans[k] = pt["scan"]
        res.psds[f"reconstructed_{k}"] = pt["recon"]
    res.psds[f"simulated_{k}"] = pt["truth_psd"]
    res.psds[f"spectrum_{k}"] = pt["spectrum"]
    res.reports[k] = pt["report"]
    res.constellations[k] = pt["rx_symbols"]


def _position_table(res: ExperimentResult, guard: float) -> list[dict]:
    """Scan readings next to the simulated PSD at the same offsets."""
    rows = []
    for k, scan in res.scans.items():
        truth = res.psds[f"simulated_{k}"]
        for r in scan.records:
            hole = HoleSpec(r.f_h, scan.width, scan.symmetric)
            rows.append({"power": k, "f_h": r.f_h, "reading_w_per_hz": r.mean_psd,
                         "simulated_w_per_hz": read_hole_psd(truth, hole, guard),
                         "floor_w_per_hz": r.floor_psd})
    return rows


def run_fig5(tx: TxConfig, link: LinkConfig, osa: OsaConfig, rx: RxConfig, settings: ScanSettings,
             cal: CalibrationConstants, seed: int, ssfm: SsfmConfig | None = None, jobs: int = 1,
             nli_window: tuple[float, float] = (11.0, 13.0),
             linear_window: tuple[float, float] = (5.0, 7.0),
             single_impairment: bool = True) -> ExperimentResult:
    """SNR against launch power: hole method, constellation and simulation."""
    res = ExperimentResult("fig5", seed)
    records = []
    single = {"nli": [], "ase": [], "txrx": []}
    for p in settings.powers_dbm:
        pt = sweep_point(p, tx, link, osa, rx, settings, cal, seed, ssfm, jobs)
        _store_point(res, pt)
        records.append(SnrRecord(p, pt["snr_hole_db"], pt["report"].snr_db, pt["snr_sim_db"],
                                 pt["snr_hole_optical_db"]))
        single["nli"].append((p, pt["snr_nli_only_db"]))
    if single_impairment:
        single["ase"], single["txrx"] = _single_impairment_sweeps(tx, link, rx, settings, cal, seed, jobs)
    rep0 = SnrReport(tuple(records))
    pw = rep0.column("p_dbm")
    named = {
        "nli_regime": ("snr_hole_optical_db", nli_window),
        "nli_regime_total": ("snr_hole_db", nli_window),
        "nli_regime_constellation": ("snr_constellation_db", nli_window),
        "linear_regime": ("snr_hole_optical_db", linear_window),
    }
    slopes = {}
    for name, (col, window) in named.items():
        pts = [(p, v) for p, v in zip(pw, rep0.column(col)) if window[0] - 1e-9 <= p <= window[1] + 1e-9]
        if len(pts) < 2:
            log.warning("slope %s skipped: fewer than 2 powers in %s dBm", name, window)
            continue
        slopes[name] = fit_loglog_slope(pts)
    for name, pts in single.items():
        if len(pts) >= 2:
            slopes[f"single_{name}"] = fit_loglog_slope(pts)
    res.snr = SnrReport(tuple(records), slopes, optimum_power(pw, rep0.column("snr_hole_db")))
    res.summary["single_impairment"] = {k: [list(t) for t in v] for k, v in single.items()}
    res.summary["optimum_constellation_dbm"] = optimum_power(pw, rep0.column("snr_constellation_db"))
    return res


def _one_impairment(args):
    kind, p, tx, link, rx, cal, seed = args
    link = replace(link, launch_power_dbm=p)
    sym = generate_symbols(tx, seed=child_seed(seed, "single", kind))
    w, _ = transmit(tx, p, symbols=sym)
    if kind == "ase":
        lin = replace(_quiet(link), spans=tuple(replace(s, gamma=0.0) for s in link.spans))
        w = apply_link_noise(propagate_link(w, lin), link, child_seed(seed, "single", kind, p))
        rx = rx_for_link(rx, link)
    else:
        w = add_transceiver_noise(w, -cal.snr_txrx_inv_db, tx.symbol_rate, child_seed(seed, "single", kind, p))
        rx = replace(rx, cd_total=0.0, cd_slope_total=0.0)
    return p, receive(w, rx, tx.symbol_rate, tx.roll_off, sym).snr_db


def _single_impairment_sweeps(tx, link, rx, settings, cal, seed, jobs):
    """Constellation SNR with only loaded noise (Kerr-free link) or only transceiver noise."""
    out = []
    for kind in ("ase", "txrx"):
        if kind == "ase" and link.lumped_noise_dbm is None:
            out.append([])
            continue
        if kind == "txrx" and math.isinf(cal.snr_txrx_inv_db):
            out.append([])
            continue
        args = [(kind, p, tx, link, rx, cal, seed) for p in settings.powers_dbm]
        out.append(run_jobs(_one_impairment, args, jobs))
    return out


def run_single_scan(tx: TxConfig, link: LinkConfig, osa: OsaConfig, settings: ScanSettings,
                    seed: int, ssfm: SsfmConfig | None = None, jobs: int = 1) -> ExperimentResult:
    """One hole scan at the link's launch power, with its reconstruction."""
    res = ExperimentResult("scan", seed)
    scan = run_scan(settings.plan(tx), tx, link, osa, child_seed(seed, "scan"), ssfm, jobs)
    k = _pkey(link.launch_power_dbm)
    res.scans[k] = scan
    res.psds[f"reconstructed_{k}"] = reconstruct_noise_psd(scan, extend_to=tx.occupied_bandwidth / 2)
    return res


def run_custom(tx: TxConfig, link: LinkConfig, osa: OsaConfig, rx: RxConfig, settings: ScanSettings,
               cal: CalibrationConstants, seed: int, ssfm: SsfmConfig | None = None,
               jobs: int = 1) -> ExperimentResult:
    """Full chain at the link's launch power: scan, constellation and simulated SNR."""
    res = ExperimentResult("custom", seed)
    pt = sweep_point(link.launch_power_dbm, tx, link, osa, rx, settings, cal, seed, ssfm, jobs)
    _store_point(res, pt)
    res.snr = SnrReport((SnrRecord(pt["p_dbm"], pt["snr_hole_db"], pt["report"].snr_db,
                                   pt["snr_sim_db"], pt["snr_hole_optical_db"]),))
    return res
