import numpy as np
import pytest

from xduct import tensor as tn


@pytest.fixture(autouse=True)
def _checked_mode():
    # Tests run with non-finite detection on.
    with tn.checked(True):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Filled by test_acceptance.py: criterion number -> (passed, detail).
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
