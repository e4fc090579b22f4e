"""``simulate`` command: run one experiment config and export its datasets."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import experiments as ex
from .config import ConfigError, ExperimentConfig, load_config
from .export import export_results

ENV_OUT = "SPECTHOLE_OUT"
ENV_JOBS = "SPECTHOLE_JOBS"

log = logging.getLogger("specthole")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Spectral-hole noise monitoring experiments.")
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--scale", choices=("desk", "paper"), default=None,
                   help="parameter profile; overrides the config's own sizes")
    p.add_argument("--out", default=None, help=f"output directory (env {ENV_OUT})")
    p.add_argument("--jobs", type=int, default=None, help=f"worker processes (env {ENV_JOBS})")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--format", action="append", choices=("csv", "json"), default=None,
                   help="export format; repeatable (default: both)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run_experiment(cfg: ExperimentConfig, jobs: int = 1):
    """Dispatch on the experiment id; returns an ExperimentResult."""
    common = dict(seed=cfg.seed, ssfm=cfg.ssfm, jobs=jobs)
    a = cfg.analysis
    if cfg.experiment == "fig1":
        return ex.run_fig1(cfg.tx, cfg.link, cfg.osa, cfg.scan, **common)
    if cfg.experiment == "fig3":
        return ex.run_fig3(cfg.tx, cfg.link, cfg.scan, **common)
    if cfg.experiment == "fig4":
        return ex.run_fig4(cfg.tx, cfg.link, cfg.osa, cfg.rx, cfg.scan, cfg.calibration, **common)
    if cfg.experiment == "fig5":
        return ex.run_fig5(cfg.tx, cfg.link, cfg.osa, cfg.rx, cfg.scan, cfg.calibration, **common,
                           nli_window=a.nli_window, linear_window=a.linear_window)
    if cfg.experiment == "scan":
        return ex.run_single_scan(cfg.tx, cfg.link, cfg.osa, cfg.scan, **common)
    return ex.run_custom(cfg.tx, cfg.link, cfg.osa, cfg.rx, cfg.scan, cfg.calibration, **common)


def _error(kind: str, message: str, **extra) -> int:
    print(json.dumps({"status": "error", "error": kind, "message": message, **extra}), file=sys.stderr)
    return 2 if kind == "config" else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    out = args.out or os.environ.get(ENV_OUT) or None
    try:
        jobs = args.jobs if args.jobs is not None else int(os.environ.get(ENV_JOBS, "1"))
    except ValueError:
        return _error("config", f"{ENV_JOBS} must be an integer", field=ENV_JOBS)
    if jobs < 1:
        return _error("config", "jobs must be >= 1", field="jobs")
    try:
        cfg = load_config(args.config, scale=args.scale, seed=args.seed, output_dir=out)
    except ConfigError as exc:
        return _error("config", exc.message, field=exc.field)
    t0 = time.perf_counter()
    try:
        result = run_experiment(cfg, jobs)
        paths = export_results(result, cfg.output_dir, cfg.snapshot(), args.format or ("csv", "json"))
    except Exception as exc:  # surfaced with run context, machine-readable
        log.debug("run failed", exc_info=True)
        return _error("run", f"{type(exc).__name__}: {exc}", experiment=cfg.experiment, seed=cfg.seed)
    print(json.dumps({"status": "ok", "experiment": cfg.experiment, "seed": cfg.seed,
                      "output_dir": cfg.output_dir, "files": [str(p) for p in paths],
                      "elapsed_s": round(time.perf_counter() - t0, 1)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
