import os
import warnings

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def quiet_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store a PASS/FAIL line for the acceptance summary printed at the end of the session."""
    def record(number, passed, detail):
        prev = CRITERIA.get(number)
        ok = passed if prev is None else (prev[0] and passed)
        text = detail if prev is None else f"{prev[1]}; {detail}"
        CRITERIA[number] = (ok, text)
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, text = CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}")
