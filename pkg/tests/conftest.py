import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance outcome: ``criterion(number, ok, detail)``."""

    def record(number, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int(str(k).rstrip("abcd")), str(k))):
        terminalreporter.write_line(_CRITERIA[key])
