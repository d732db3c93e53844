"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        detail = ""
        if report.failed:
            detail = str(report.longrepr.reprcrash.message) if hasattr(report.longrepr, "reprcrash") else ""
        _RESULTS[number] = (title, report.outcome, detail.splitlines()[0] if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, outcome, detail = _RESULTS[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"{status} criterion {number}: {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
