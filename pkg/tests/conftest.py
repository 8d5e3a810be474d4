"""Collects the acceptance criteria outcomes and prints one line per criterion."""

import pytest

_RESULTS = {}
_TITLES = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or len(marker.args) != 2:
        return
    number, title = marker.args
    _TITLES[number] = title
    if report.when == "call" or (report.when == "setup" and not report.passed):
        measured = "; ".join(v for k, v in item.user_properties if k == "measured")
        status = "PASS" if report.passed else "FAIL"
        if report.skipped:
            status = "SKIP"
        # a criterion split over several tests fails if any part fails
        prev = _RESULTS.get(number)
        if prev is not None:
            status = status if prev[0] == "PASS" else prev[0]
            measured = "; ".join(filter(None, (prev[1], measured)))
        _RESULTS[number] = (status, measured)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_TITLES):
        status, measured = _RESULTS.get(number, ("NOT RUN", ""))
        tr.write_line(f"criterion {number:2d}  {status:4s}  {_TITLES[number]}")
        if measured:
            tr.write_line(f"               {measured}")
