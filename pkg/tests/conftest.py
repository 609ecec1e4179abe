import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")

# (criterion id, passed, detail) rows filled by test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def report():
    def add(cid, passed, detail):
        ACCEPTANCE.append((cid, bool(passed), detail))
        assert passed, f"criterion {cid}: {detail}"

    return add


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} [{cid:>2}] {detail}")
