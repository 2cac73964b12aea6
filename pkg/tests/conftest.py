"""Acceptance reporting: one PASS/FAIL line per criterion at the end of the run.

Tests opt in with ``@pytest.mark.acceptance("<criterion>")``; a criterion
passes only when every test carrying it passed.
"""
from __future__ import annotations

import pytest

_RESULTS: dict[str, list[tuple[str, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _RESULTS.setdefault(marker.args[0], []).append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, runs in _RESULTS.items():
        ok = all(outcome == "passed" for _, outcome in runs)
        failed = [name for name, outcome in runs if outcome != "passed"]
        line = f"{'PASS' if ok else 'FAIL'}  {criterion}"
        if failed:
            line += f"  (failed: {', '.join(failed)})"
        terminalreporter.write_line(line)
