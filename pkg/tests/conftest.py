import pytest

ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion."""

    def _report(key: str, passed, text: str) -> None:
        tag = {True: "PASS", False: "FAIL", None: "NOT RUN"}[passed]
        line = f"{key:<4} {tag:<7} {text}"
        ACCEPTANCE_LINES[key] = line
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
