"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary.

Tests tagged ``@pytest.mark.criterion(n, "title")`` may attach a measured
value with ``request.node.user_properties.append(("detail", text))``.
"""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        num, title = mark.args
        detail = dict(item.user_properties).get("detail", "")
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        prev = _RESULTS.get(num)
        # a criterion split over several tests passes only if all of them do
        if prev is not None and prev[1] != "PASS":
            status = prev[1]
        details = [d for d in ((prev[2] if prev else ""), detail) if d]
        _RESULTS[num] = (title, status, "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, status, detail = _RESULTS[num]
        line = f"criterion {num} [{status}] {title}"
        if detail:
            line += f" :: {detail}"
        terminalreporter.write_line(line)
