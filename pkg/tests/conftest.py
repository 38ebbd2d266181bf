import pytest

ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion and fail the test on FAIL."""

    def report(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
