"""Shared fixtures and the acceptance verdict summary."""

from __future__ import annotations

import numpy as np
import pytest

# criterion number -> (title, passed, detail), filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str = "") -> str:
    line = f"ACCEPTANCE {number} [{'PASS' if passed else 'FAIL'}] {title}"
    if detail:
        line += f" :: {detail}"
    ACCEPTANCE_RESULTS[number] = (title, passed, detail, line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number][3])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
