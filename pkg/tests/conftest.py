import numpy as np
import pytest

ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Store one acceptance outcome; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"CRITERION {criterion}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
