import pytest

_LINES = []


@pytest.fixture
def report(request):
    """Record a one-line verdict per acceptance criterion."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        _LINES.append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
