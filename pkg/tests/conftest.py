import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


@pytest.fixture
def criterion(request):
    """Detail dict for an acceptance test; one PASS/FAIL line is recorded on teardown."""
    mark = request.node.get_closest_marker("criterion")
    detail = {}
    yield detail
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    text = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = f"criterion {mark.args[0]:>2} [{status}] {mark.args[1]}: {text}"
    _ACCEPTANCE.append((mark.args[0], line))
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
