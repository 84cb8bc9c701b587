import numpy as np
import pytest

from dqdsim.model import REFERENCE_RATES

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def ref_rates():
    return REFERENCE_RATES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; printed in the terminal summary."""

    def record(passed: bool, detail: str) -> bool:
        ACCEPTANCE_RESULTS.append((request.node.name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
