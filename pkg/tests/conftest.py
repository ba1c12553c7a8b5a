"""Shared fixtures plus the acceptance-summary reporter.

The acceptance suite registers one line per criterion; the terminal summary
hook prints them after the run so the pass/fail ledger is always visible,
whether or not output capture is on.
"""
from __future__ import annotations

from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"

# criterion number -> (title, status); populated by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, list[str]] = {}


def register_criterion(number: int, title: str) -> None:
    ACCEPTANCE_RESULTS.setdefault(number, [title, "FAIL"])


def mark_criterion_passed(number: int) -> None:
    ACCEPTANCE_RESULTS[number][1] = "PASS"


@pytest.fixture()
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, status = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {title}: {status}")
