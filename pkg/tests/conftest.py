import pytest

# criterion number -> (outcome, detail lines)
_RESULTS: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.fixture
def report(request):
    """Attach a detail line (shown in the summary) to the test's acceptance criterion."""
    marker = request.node.get_closest_marker("criterion")
    n = marker.args[0] if marker else None

    def add(text: str, warn: bool = False):
        entry = _RESULTS.setdefault(n, [None, [], False])
        entry[1].append(text)
        entry[2] = entry[2] or warn
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    entry = _RESULTS.setdefault(marker.args[0], [None, [], False])
    if rep.failed:
        entry[0] = "FAIL"
    elif rep.when == "call" and entry[0] is None:
        entry[0] = "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, lines, warn = _RESULTS[n]
        status = status or "NOT RUN"
        if status == "PASS" and warn:
            status = "PASS (warning)"
        tr.write_line(f"criterion {n:>2}: {status}" + (f"  {lines[0]}" if lines else ""))
        for extra in lines[1:]:
            tr.write_line(f"              {extra}")
