import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adaptcov.runtime import tune_allocator

tune_allocator()

settings.register_profile(
    "thorough",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("thorough")

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, text): acceptance criterion covered by a test")
    config.addinivalue_line("markers", "acceptance: long-running acceptance experiment")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marks = getattr(report, "criterion", None)
    if marks:
        cid, text = marks
        prev = _criteria.get(cid)
        if prev is not None:
            outcome = "failed" if "failed" in (prev[1], report.outcome) else report.outcome
            _criteria[cid] = (text, outcome, prev[2] + report.duration)
        else:
            _criteria[cid] = (text, report.outcome, report.duration)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria, key=lambda c: int(c[2:]) if c[2:].isdigit() else c):
        text, outcome, dur = _criteria[cid]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{cid} {status} ({dur:.1f}s) {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
