import pytest

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict: ``criterion(number, ok, detail)``."""

    def record(number, ok, detail):
        _RESULTS[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        ok, detail = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
