import pytest

_LINES: dict = {}


@pytest.fixture
def criterion():
    """report(number, title, passed, detail) records one PASS/FAIL line."""

    def report(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {title} | {detail}"
        _LINES[number] = line
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_LINES):
            terminalreporter.write_line(_LINES[key])
