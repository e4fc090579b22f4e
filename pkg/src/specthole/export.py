"""CSV and JSON export of experiment results.

Column schemas are fixed here, and so are the dB conversions. Floats are
written with ``repr`` so files are byte-stable across identical runs and JSON
round-trips to full precision.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .analysis import SnrRecord, SnrReport
from .coherentrx import ConstellationReport
from .holescan import NoiseScanResult, ScanRecord
from .osa import Psd

__all__ = [
    "PSD_COLUMNS",
    "SCAN_COLUMNS",
    "SNR_COLUMNS",
    "CONSTELLATION_COLUMNS",
    "EPS_COLUMNS",
    "to_db",
    "psd_rows",
    "scan_rows",
    "snr_rows",
    "constellation_rows",
    "eps_rows",
    "write_csv",
    "to_jsonable",
    "dumps",
    "psd_from_json",
    "scan_from_json",
    "snr_report_from_json",
    "constellation_report_from_json",
    "export_results",
]

PSD_COLUMNS = ("freq_hz", "psd_dbm_per_hz")
SCAN_COLUMNS = ("f_h_hz", "mean_psd_dbm_per_hz", "std_db", "n_acq")
SNR_COLUMNS = ("p_dbm", "snr_hole_db", "snr_const_db", "snr_sim_db")
CONSTELLATION_COLUMNS = ("i", "q", "pol")
EPS_COLUMNS = ("f_h_hz", "width_hz", "eps_db")


def to_db(v: float, offset: float = 0.0) -> float:
    """10 log10(v) + offset; zero maps to -inf."""
    return 10 * math.log10(v) + offset if v > 0 else -math.inf


def _w_to_dbm(v: float) -> float:
    return to_db(v, 30.0)


def psd_rows(p: Psd, step: float | None = None) -> list[tuple]:
    """One row per bin, or every k-th bin with k = round(step / df)."""
    k = 1 if step is None else max(1, int(round(step / p.df)))
    return [(float(f), _w_to_dbm(float(v))) for f, v in zip(p.freq[::k], p.values[::k])]


def scan_rows(res: NoiseScanResult) -> list[tuple]:
    return [(r.f_h, _w_to_dbm(r.mean_psd), r.std_db, r.n_acquisitions) for r in res.records]


def _opt(v):
    return "" if v is None else v


def snr_rows(rep: SnrReport) -> list[tuple]:
    return [(r.p_dbm, r.snr_hole_db, _opt(r.snr_constellation_db), _opt(r.snr_sim_db)) for r in rep.records]


def constellation_rows(s: np.ndarray) -> list[tuple]:
    s = np.atleast_2d(s)
    return [(float(v.real), float(v.imag), pol) for pol in range(s.shape[0]) for v in s[pol]]


def eps_rows(cells: Iterable) -> list[tuple]:
    return [(c.f_h, c.width, c.eps_db) for c in cells]


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, columns: Iterable[str], rows: Iterable[tuple]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])
    return path


# --------------------------------------------------------------------------
# JSON


def to_jsonable(obj: Any) -> Any:
    """Dataclasses, tuples, numpy arrays and non-finite floats to plain JSON."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"real": to_jsonable(obj.real), "imag": to_jsonable(obj.imag)}
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _num(v):
    if isinstance(v, str):
        return float(v)
    return v


def psd_from_json(d: dict) -> Psd:
    return Psd(np.asarray(d["freq"], dtype=float), np.asarray(d["values"], dtype=float),
               rbw=d["rbw"], n_averages=d["n_averages"], normalization_power=d["normalization_power"])


def scan_from_json(d: dict) -> NoiseScanResult:
    recs = tuple(ScanRecord(**{**r, "readings": tuple(r["readings"])}) for r in d["records"])
    return NoiseScanResult(recs, d["launch_power_dbm"], d["width"], d["symmetric"], d["seed"],
                           d["tx"], d["link"])


def snr_report_from_json(d: dict) -> SnrReport:
    recs = tuple(SnrRecord(**{k: _num(v) for k, v in r.items()}) for r in d["records"])
    return SnrReport(recs, {k: _num(v) for k, v in d["slopes"].items()}, _num(d["optimum_power_dbm"]))


def constellation_report_from_json(d: dict) -> ConstellationReport:
    return ConstellationReport(**{k: _num(v) for k, v in d.items()})


# --------------------------------------------------------------------------
# experiment artifacts


def export_results(result, out_dir: str | Path, snapshot: dict, formats: Iterable[str] = ("csv", "json"),
                   psd_step: float | None = 50e6) -> list[Path]:
    """Write every table of ``result`` to ``out_dir``; returns the paths written.

    ``config.json`` (the resolved snapshot, seed included) is always written
    so the run can be reproduced from its own output directory. PSD tables
    are decimated to ``psd_step`` (None keeps every bin).
    """
    if not result.complete:
        raise ValueError("refusing to export a partial run")
    formats = tuple(formats)
    bad = set(formats) - {"csv", "json"}
    if bad:
        raise ValueError(f"unknown export format(s): {', '.join(sorted(bad))}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "config.json"
    cfg_path.write_text(dumps(snapshot))
    written: list[Path] = [cfg_path]
    if "csv" in formats:
        for name, p in sorted(result.psds.items()):
            step = psd_step if p.df < (psd_step or 0) else None
            written.append(write_csv(out / f"psd_{name}.csv", PSD_COLUMNS, psd_rows(p, step)))
        for name, scan in sorted(result.scans.items()):
            written.append(write_csv(out / f"scan_{name}.csv", SCAN_COLUMNS, scan_rows(scan)))
        if result.snr is not None:
            written.append(write_csv(out / "snr.csv", SNR_COLUMNS, snr_rows(result.snr)))
        if result.eps:
            written.append(write_csv(out / "eps.csv", EPS_COLUMNS, eps_rows(result.eps)))
        for name, s in sorted(result.constellations.items()):
            written.append(write_csv(out / f"constellation_{name}.csv", CONSTELLATION_COLUMNS,
                                     constellation_rows(s)))
    if "json" in formats:
        doc = {
            "experiment": result.experiment,
            "seed": result.seed,
            "config": snapshot,
            "summary": result.summary,
            "snr": result.snr,
            "eps": result.eps,
            "scans": result.scans,
            "constellation_reports": result.reports,
        }
        path = out / "results.json"
        path.write_text(dumps(doc))
        written.append(path)
    return written
