"""JSON experiment configuration with scale profiles and field-level validation.

Resolution order for every field, lowest to highest: library default,
experiment default, scale profile, config document. A scale passed
explicitly (the ``--scale`` flag) is applied last instead.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .analysis import CalibrationConstants
from .coherentrx import RxConfig
from .experiments import ScanSettings
from .fiberlink import FiberSpan, LinkConfig, SsfmConfig
from .osa import OsaConfig
from .txgen import TxConfig

__all__ = [
    "SCHEMA_VERSION",
    "EXPERIMENTS",
    "SCALE_PROFILES",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]

SCHEMA_VERSION = 1
EXPERIMENTS = ("fig1", "fig3", "fig4", "fig5", "scan", "custom")
SECTIONS = ("tx", "span", "link", "ssfm", "osa", "rx", "scan", "analysis")

SCALE_PROFILES = {
    "desk": {"tx": {"n_symbols": 2**15}, "rx": {"eval_symbols": 2**15}},
    "paper": {"tx": {"n_symbols": 2**16}, "rx": {"eval_symbols": 10**6}},
}

# experiments that load the link with the lumped linear noise by default
_NOISY = ("fig4", "fig5", "scan", "custom")


class ConfigError(ValueError):
    """Validation failure tied to one config field (dotted path)."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path
        self.message = message


@dataclass(frozen=True)
class AnalysisSettings:
    snr_txrx_inv_db: float | None = -19.15
    p_lin_dbm: float = -19.0
    reference_bandwidth: float = 100e9
    nli_window: tuple[float, float] = (11.0, 13.0)
    linear_window: tuple[float, float] = (5.0, 7.0)

    def calibration(self) -> CalibrationConstants:
        inv = -math.inf if self.snr_txrx_inv_db is None else self.snr_txrx_inv_db
        return CalibrationConstants(inv, self.p_lin_dbm, self.reference_bandwidth)


@dataclass(frozen=True)
class LinkSettings:
    n_spans: int = 3
    amplifier_policy: str = "noiselessFullRecovery"
    noise_figure_db: float | None = None
    lumped_noise_dbm: float | None = None
    noise_bandwidth: float = 100e9
    launch_power_dbm: float = 9.0
    simulation_bandwidth: float = 100e9


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    scale: str
    tx: TxConfig
    link: LinkConfig
    ssfm: SsfmConfig
    osa: OsaConfig
    rx: RxConfig
    scan: ScanSettings
    analysis: AnalysisSettings
    output_dir: str
    sections: dict = field(default_factory=dict)

    @property
    def calibration(self) -> CalibrationConstants:
        return self.analysis.calibration()

    def snapshot(self) -> dict:
        """Fully resolved document; parsing it reproduces this config."""
        doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "experiment": self.experiment,
                               "seed": self.seed, "scale": self.scale, "output_dir": self.output_dir}
        for name in SECTIONS:
            doc[name] = dict(self.sections[name])
        return doc


_CLASSES = {
    "tx": TxConfig,
    "span": FiberSpan,
    "link": LinkSettings,
    "ssfm": SsfmConfig,
    "osa": OsaConfig,
    "rx": RxConfig,
    "scan": ScanSettings,
    "analysis": AnalysisSettings,
}


def _experiment_defaults(experiment: str) -> dict:
    d: dict[str, dict] = {name: {} for name in SECTIONS}
    if experiment in _NOISY:
        d["link"]["lumped_noise_dbm"] = AnalysisSettings().p_lin_dbm
    if experiment == "fig3":
        d["link"]["launch_power_dbm"] = 13.0
    return d


def _check_value(path: str, default: Any, value: Any) -> Any:
    """Light type check against the field default; JSON lists become tuples."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if isinstance(default, int) and isinstance(value, float) and not value.is_integer():
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value) if isinstance(default, int) else value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if default is None:
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(path, f"expected a number or null, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        for i, v in enumerate(value):
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise ConfigError(f"{path}[{i}]", f"expected a number, got {v!r}")
        return tuple(value)
    return value


def _section(name: str, values: dict) -> tuple[Any, dict]:
    cls = _CLASSES[name]
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name != "spans"}
    defaults = cls()
    resolved = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(f"{name}.{key}", "unknown field")
        resolved[key] = _check_value(f"{name}.{key}", getattr(defaults, key), value)
    try:
        obj = cls(**resolved)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None
    full = {k: _plain(getattr(obj, k)) for k in fields}
    return obj, full


def _plain(v: Any) -> Any:
    return list(v) if isinstance(v, tuple) else v


def _update(layered: dict, profile: dict) -> None:
    for name, values in profile.items():
        layered[name].update(values)


def parse_config(doc: dict, scale: str | None = None, seed: int | None = None,
                 output_dir: str | None = None) -> ExperimentConfig:
    """Validate a config document and resolve it into typed sections."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {"schema_version", "experiment", "seed", "scale", "output_dir", *SECTIONS}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown field")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"must be {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    experiment = doc.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}, got {experiment!r}")
    seed = doc.get("seed") if seed is None else seed
    if seed is None:
        raise ConfigError("seed", "a seed is mandatory")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"must be a non-negative integer, got {seed!r}")
    scale_arg = scale
    scale = scale or doc.get("scale", "desk")
    if scale not in SCALE_PROFILES:
        raise ConfigError("scale", f"must be one of {', '.join(SCALE_PROFILES)}, got {scale!r}")

    # an explicit scale argument beats the document; a scale named in the
    # document only supplies defaults beneath its own sections
    layered = _experiment_defaults(experiment)
    explicit = scale_arg is not None
    if not explicit:
        _update(layered, SCALE_PROFILES[scale])
    for name in SECTIONS:
        values = doc.get(name, {})
        if not isinstance(values, dict):
            raise ConfigError(name, "section must be a JSON object")
        layered[name].update(values)
    if explicit:
        _update(layered, SCALE_PROFILES[scale])

    built, full = {}, {}
    for name in SECTIONS:
        built[name], full[name] = _section(name, layered[name])
    ls: LinkSettings = built["link"]
    try:
        link = LinkConfig(spans=(built["span"],) * ls.n_spans, amplifier_policy=ls.amplifier_policy,
                          noise_figure_db=ls.noise_figure_db, lumped_noise_dbm=ls.lumped_noise_dbm,
                          noise_bandwidth=ls.noise_bandwidth, launch_power_dbm=ls.launch_power_dbm,
                          simulation_bandwidth=ls.simulation_bandwidth)
        if ls.n_spans < 1:
            raise ValueError("n_spans must be >= 1")
    except ValueError as exc:
        raise ConfigError("link", str(exc)) from None
    tx: TxConfig = built["tx"]
    if link.simulation_bandwidth > tx.dac_rate * (1 + 1e-9):
        raise ConfigError("link.simulation_bandwidth", "exceeds the sample rate set by tx")
    out = output_dir or doc.get("output_dir") or str(Path("results") / experiment)
    if not isinstance(out, str):
        raise ConfigError("output_dir", "must be a string")
    return ExperimentConfig(experiment=experiment, seed=seed, scale=scale, tx=tx, link=link,
                            ssfm=built["ssfm"], osa=built["osa"], rx=built["rx"], scan=built["scan"],
                            analysis=built["analysis"], output_dir=out, sections=full)


def load_config(path: str | os.PathLike, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(doc, **overrides)
