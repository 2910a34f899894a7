import pytest

# Lines recorded by the acceptance suite, printed once at the end of the session.
ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    def _record(number, ok, detail):
        ACCEPTANCE_LINES.append((number, f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"))

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
