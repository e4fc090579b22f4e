import csv
import json
import math

import numpy as np
import pytest

from specthole.analysis import SnrRecord, SnrReport
from specthole.cli import main, run_experiment
from specthole.coherentrx import ConstellationReport
from specthole.config import SCALE_PROFILES, SCHEMA_VERSION, ConfigError, load_config, parse_config
from specthole.experiments import ExperimentResult
from specthole.export import (PSD_COLUMNS, SCAN_COLUMNS, SNR_COLUMNS, constellation_report_from_json,
                              dumps, export_results, psd_from_json, scan_from_json,
                              snr_report_from_json, to_jsonable)
from specthole.holescan import NoiseScanResult, ScanRecord
from specthole.osa import Psd


def doc(**kw):
    d = {"schema_version": SCHEMA_VERSION, "experiment": "fig1", "seed": 3}
    d.update(kw)
    return d


SMALL_SCAN = {
    "schema_version": SCHEMA_VERSION,
    "experiment": "scan",
    "seed": 5,
    "tx": {"n_symbols": 4096, "dac_bits": None},
    "link": {"n_spans": 1, "launch_power_dbm": 9.0},
    "scan": {"increment": 4e9, "half_range": 12e9, "n_acquisitions": 2},
}


# --------------------------------------------------------------------------
# config


def test_minimal_config_resolves_defaults():
    cfg = parse_config(doc())
    assert cfg.scale == "desk"
    assert cfg.tx.n_symbols == SCALE_PROFILES["desk"]["tx"]["n_symbols"]
    assert len(cfg.link.spans) == 3
    assert cfg.link.lumped_noise_dbm is None
    assert cfg.calibration.snr_txrx_inv_db == -19.15


def test_noisy_experiments_load_the_lumped_noise():
    assert parse_config(doc(experiment="fig5")).link.lumped_noise_dbm == -19.0
    assert parse_config(doc(experiment="fig3")).link.launch_power_dbm == 13.0


@pytest.mark.parametrize("bad,field_path", [
    ({"seed": None}, "seed"),
    ({"seed": -1}, "seed"),
    ({"experiment": "fig9"}, "experiment"),
    ({"schema_version": 0}, "schema_version"),
    ({"tx": {"n_symbols": "many"}}, "tx.n_symbols"),
    ({"tx": {"bogus": 1}}, "tx.bogus"),
    ({"link": {"n_spans": 0}}, "link"),
    ({"scan": {"powers_dbm": [5, "x"]}}, "scan.powers_dbm[1]"),
    ({"rx": []}, "rx"),
    ({"extra": 1}, "extra"),
    ({"scale": "huge"}, "scale"),
])
def test_validation_reports_the_field(bad, field_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(doc(**bad))
    assert exc.value.field == field_path


def test_invalid_section_value_is_a_config_error():
    with pytest.raises(ConfigError) as exc:
        parse_config(doc(tx={"n_symbols": 1000}))
    assert exc.value.field == "tx"


def test_snapshot_round_trip():
    cfg = parse_config(doc(experiment="fig5", tx={"roll_off": 0.1}, scan={"powers_dbm": [5, 9, 13]}))
    snap = json.loads(json.dumps(cfg.snapshot()))
    again = parse_config(snap)
    assert again.snapshot() == cfg.snapshot()
    assert again.tx == cfg.tx and again.link == cfg.link and again.scan == cfg.scan


def test_explicit_scale_beats_document_sizes():
    d = doc(tx={"n_symbols": 4096})
    assert parse_config(d).tx.n_symbols == 4096
    assert parse_config(d, scale="paper").tx.n_symbols == SCALE_PROFILES["paper"]["tx"]["n_symbols"]


def test_seed_override_and_output_dir():
    cfg = parse_config(doc(), seed=99, output_dir="/tmp/x")
    assert cfg.seed == 99 and cfg.output_dir == "/tmp/x"


def test_load_config_reports_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert exc.value.field == "<file>"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


# --------------------------------------------------------------------------
# export


def _scan():
    recs = (ScanRecord(2e9, 1e-16, 1e-18, 2, (0.99e-16, 1.01e-16), 2e-17, 1e-2),
            ScanRecord(4e9, 2e-16, 1e-18, 2, (1.99e-16, 2.01e-16), 2e-17, 1e-2))
    return NoiseScanResult(recs, 13.0, 1e9, True, 7, {"n_symbols": 4}, {"spans": []})


def _result():
    res = ExperimentResult("custom", 7)
    f = np.linspace(-1e9, 1e9, 5)
    res.psds["a"] = Psd(f, np.array([1e-16, 2e-16, 0.0, 3e-16, 1e-16]))
    res.scans["13dBm"] = _scan()
    res.snr = SnrReport((SnrRecord(13.0, 8.5, 8.4, None, 9.0),), {"nli_regime": -2.01}, None)
    res.reports["13dBm"] = ConstellationReport(8.4, 8.5, 8.45, 0.0, 0.1, 32768, 0)
    res.constellations["13dBm"] = np.array([[1 + 1j, -1j], [0.5, 2j]])
    return res


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_csv_schemas(tmp_path):
    export_results(_result(), tmp_path, {"seed": 7}, psd_step=None)
    psd = read_csv(tmp_path / "psd_a.csv")
    assert tuple(psd[0]) == PSD_COLUMNS
    freqs = [float(r[0]) for r in psd[1:]]
    assert freqs == sorted(freqs)
    assert psd[3][1] == "-inf"  # zero PSD bin
    scan = read_csv(tmp_path / "scan_13dBm.csv")
    assert tuple(scan[0]) == SCAN_COLUMNS
    assert len(scan) == 1 + 2
    assert float(scan[1][2]) > 0.0  # std column present per row
    snr = read_csv(tmp_path / "snr.csv")
    assert tuple(snr[0]) == SNR_COLUMNS
    assert snr[1] == ["13.0", "8.5", "8.4", ""]
    const = read_csv(tmp_path / "constellation_13dBm.csv")
    assert const[0] == ["i", "q", "pol"] and len(const) == 5


def test_export_embeds_snapshot_and_seed(tmp_path):
    export_results(_result(), tmp_path, {"seed": 7, "experiment": "custom"})
    assert json.loads((tmp_path / "config.json").read_text())["seed"] == 7
    res = json.loads((tmp_path / "results.json").read_text())
    assert res["seed"] == 7 and res["config"]["experiment"] == "custom"


def test_json_round_trip_full_precision():
    res = _result()
    d = json.loads(dumps({"psd": res.psds["a"], "scan": res.scans["13dBm"], "snr": res.snr,
                          "rep": res.reports["13dBm"]}))
    p = psd_from_json(d["psd"])
    np.testing.assert_array_equal(p.values, res.psds["a"].values)
    np.testing.assert_array_equal(p.freq, res.psds["a"].freq)
    assert scan_from_json(d["scan"]) == res.scans["13dBm"]
    assert snr_report_from_json(d["snr"]) == res.snr
    assert constellation_report_from_json(d["rep"]) == res.reports["13dBm"]


def test_non_finite_values_are_encoded():
    assert to_jsonable([math.inf, -math.inf, np.float64(1.5)]) == ["inf", "-inf", 1.5]


def test_partial_run_export_refused(tmp_path):
    res = _result()
    res.complete = False
    with pytest.raises(ValueError, match="partial"):
        export_results(res, tmp_path, {})
    assert not any(tmp_path.iterdir())


def test_unknown_format_refused(tmp_path):
    with pytest.raises(ValueError):
        export_results(_result(), tmp_path, {}, formats=("xml",))


# --------------------------------------------------------------------------
# CLI


def test_cli_config_error_exit_and_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc(tx={"roll_off": "wide"})))
    assert main([str(p), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "error" and err["error"] == "config" and err["field"] == "tx.roll_off"


def test_cli_bad_jobs_env(tmp_path, capsys, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(SMALL_SCAN))
    monkeypatch.setenv("SPECTHOLE_JOBS", "two")
    assert main([str(p)]) == 2
    assert json.loads(capsys.readouterr().err)["field"] == "SPECTHOLE_JOBS"


def test_cli_run_error_exit(tmp_path, capsys):
    d = dict(SMALL_SCAN, scan={"increment": 4e9, "half_range": 3e9})  # empty plan
    p = tmp_path / "c.json"
    p.write_text(json.dumps(d))
    assert main([str(p), "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "run" and err["seed"] == 5 and "empty" in err["message"]


def test_cli_run_is_byte_deterministic(tmp_path, capsys, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(SMALL_SCAN))
    out = tmp_path / "out"
    assert main([str(p), "--out", str(out)]) == 0
    ok = json.loads(capsys.readouterr().out)
    assert ok["status"] == "ok" and ok["seed"] == 5
    first = out.rename(tmp_path / "first")
    # same config and seed, output dir from the environment, two workers
    monkeypatch.setenv("SPECTHOLE_OUT", str(out))
    assert main([str(p), "--jobs", "2"]) == 0
    names = sorted(f.name for f in first.iterdir())
    assert names == sorted(f.name for f in out.iterdir())
    assert "scan_9dBm.csv" in names and "config.json" in names
    for n in names:
        assert (first / n).read_bytes() == (out / n).read_bytes()
    # the emitted snapshot alone reproduces the run
    again = tmp_path / "again"
    again.mkdir()
    snap = again / "snapshot.json"
    snap.write_bytes((first / "config.json").read_bytes())
    out.rename(tmp_path / "second")
    assert main([str(snap)]) == 0
    for n in names:
        assert (first / n).read_bytes() == (out / n).read_bytes()


def test_run_experiment_dispatch_fig1():
    cfg = parse_config(doc(tx={"n_symbols": 4096, "dac_bits": None}, link={"n_spans": 1}))
    res = run_experiment(cfg)
    assert res.experiment == "fig1"
    assert set(res.psds) == {"no_load", "osnr_24.3dB", "osnr_14.8dB"}
    loads = res.summary["loads"]
    assert loads[1]["osnr_db"] == pytest.approx(24.3, abs=0.3)
    assert loads[2]["osnr_db"] == pytest.approx(14.8, abs=0.3)
