from __future__ import annotations

from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def report():
    def record(criterion: str, passed: bool, detail: str) -> None:
        line = (criterion, bool(passed), detail)
        ACCEPTANCE.append(line)
        print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
        assert passed, f"{criterion}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
