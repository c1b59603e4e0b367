import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("kolmo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kolmo")

# criterion number -> (description, passed); filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        desc, ok = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {desc}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
