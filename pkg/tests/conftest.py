"""Shared desk-scale runs and the per-criterion acceptance summary."""
import pytest

from specthole.cli import run_experiment
from specthole.config import SCHEMA_VERSION, parse_config

_VERDICTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance verdict: criterion(label, passed, detail)."""
    def record(label: str, passed: bool, detail: str = "") -> bool:
        _VERDICTS.append((label, bool(passed), detail))
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")


def desk(experiment: str, **sections) -> dict:
    return {"schema_version": SCHEMA_VERSION, "experiment": experiment, "seed": 1, "scale": "desk",
            **sections}


@pytest.fixture(scope="session")
def fig3_desk():
    return run_experiment(parse_config(desk("fig3")))


@pytest.fixture(scope="session")
def fig5_desk():
    return run_experiment(parse_config(desk("fig5")))
