import pytest

_REPORT = {}


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""
    def record(n, title, ok, detail=""):
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title}" + (f" [{detail}]" if detail else "")
        _REPORT[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_REPORT):
            terminalreporter.write_line(_REPORT[n])
