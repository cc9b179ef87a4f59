"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _OUTCOMES.get(n, (title, True, ""))
        ok = prev[1] and report.outcome == "passed"
        detail = "" if ok else (prev[2] or report.longreprtext.strip().splitlines()[-1][:160])
        _OUTCOMES[n] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        title, ok, detail = _OUTCOMES[n]
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
