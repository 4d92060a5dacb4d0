import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> PASS/FAIL line, filled by test_acceptance
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
