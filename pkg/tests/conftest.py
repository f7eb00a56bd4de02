import os

import numpy as np
import pytest

_RESULTS = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_collection_modifyitems(config, items):
    gates = {"slow": ("SEQDEC_SLOW", "long-running; set SEQDEC_SLOW=1 to run"),
             "very_slow": ("SEQDEC_FULL", "multi-hour; set SEQDEC_FULL=1 to run")}
    for item in items:
        for mark, (var, reason) in gates.items():
            if mark in item.keywords and not os.environ.get(var):
                item.add_marker(pytest.mark.skip(reason=reason))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.skipped):
        if report.skipped:
            status = "SKIP"
            detail = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
        else:
            status = "PASS" if report.passed else "FAIL"
            detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        _RESULTS[num] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_RESULTS):
        status, title, detail = _RESULTS[num]
        line = f"[{status}] {num}. {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
