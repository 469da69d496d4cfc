from __future__ import annotations

import json
import shutil
import time
from pathlib import Path

import pytest

from muscad import cli

FIXTURES = Path(__file__).parent / "fixtures"

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def run_cli(*args: str) -> int:
    return cli.main([str(a) for a in args])


def pipeline_args(name: str, workdir: Path, *extra: str) -> list[str]:
    return ["--config", FIXTURES / f"{name}_config.json", "--input", FIXTURES / f"{name}.jsonl",
            "--workdir", workdir, "--threads", "1", *extra]


def load_topics(name: str) -> dict[str, list[str]]:
    return json.loads((FIXTURES / f"{name}_topics.json").read_text())


class AcceptanceRecorder:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title

    def check(self, passed: bool, detail: str) -> None:
        _ACCEPTANCE[self.number] = (self.title, bool(passed), detail)
        assert passed, f"criterion {self.number} ({self.title}) failed: {detail}"


@pytest.fixture
def acceptance():
    return AcceptanceRecorder


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")


@pytest.fixture(scope="session")
def planted_run(tmp_path_factory):
    """One full pipeline run over the planted fixture, shared by the end-to-end tests."""
    workdir = tmp_path_factory.mktemp("planted") / "work"
    started = time.perf_counter()
    status = run_cli("pipeline", *pipeline_args("planted", workdir))
    elapsed = time.perf_counter() - started
    assert status == 0
    return {"workdir": workdir, "seconds": elapsed}


@pytest.fixture
def planted_copy(planted_run, tmp_path):
    dst = tmp_path / "work"
    shutil.copytree(planted_run["workdir"], dst)
    return dst
