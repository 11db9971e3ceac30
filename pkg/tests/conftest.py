"""Shared fixtures; collects acceptance verdicts for the terminal summary."""

import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail, seconds)`` records and prints one verdict line."""

    def record(n: int, ok: bool, detail: str, seconds: float) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  ({seconds:.1f} s)  {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
