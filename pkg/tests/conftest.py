"""Shared fixtures; collects the acceptance lines printed at the end of the session."""
import pytest

_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Return ``record(number, title, passed, detail)``; results are printed in the summary."""
    def record(number, title, passed, detail=""):
        _ACCEPTANCE[number] = (title, bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {title}: {detail}")
