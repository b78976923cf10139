import numpy as np
import pytest

from fuselage_qbo import env as fenv

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Record one acceptance criterion result for the end-of-run report."""

    def record(name, passed, detail=""):
        _CRITERIA.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def env8():
    return fenv.make_env(177, 8, condition_seed=1, sigma=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
