import pytest

_REPORT = []


@pytest.fixture
def acceptance_report():
    """Append (criterion, passed, detail) rows; printed at the end of the session."""
    def add(criterion, passed, detail):
        _REPORT.append((criterion, bool(passed), detail))
    return add


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_REPORT, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
