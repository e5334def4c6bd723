import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = {}
_DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _CRITERIA.get(report.nodeid)
    if marker is None:
        return
    num, _ = marker
    msg = _DETAILS.get(report.nodeid, "")
    if report.outcome != "passed" and report.longrepr is not None:
        crash = getattr(report.longrepr, "reprcrash", None)
        msg = crash.message.splitlines()[0] if crash is not None else str(report.longrepr).splitlines()[-1]
    _CRITERIA[report.nodeid] = (num, (report.outcome, msg))


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = (m.args[0], None)


def pytest_terminal_summary(terminalreporter):
    rows = sorted(v for v in _CRITERIA.values() if v[1] is not None)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, (outcome, msg) in rows:
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {num:>2}: {status}"
        if msg:
            line += f"  {msg[:200]}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def detail(request):
    """Record a one-line measurement for the acceptance report."""
    def put(msg: str):
        _DETAILS[request.node.nodeid] = msg
        print(msg)
    return put
