import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from olcavoid.lindyn import LinSystem, with_gain

settings.register_profile("pkg", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")

# acceptance lines collected by test_acceptance.py, printed once at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


def contractive_system(rng, d_x=4, d_u=2, d_w=None, norm=0.8):
    """Random system with K = 0 and ||A||_2 = norm (so Atil = A is contractive)."""
    d_w = d_x if d_w is None else d_w
    A = rng.standard_normal((d_x, d_x))
    A *= norm / np.linalg.norm(A, 2)
    B = rng.standard_normal((d_x, d_u))
    D = rng.standard_normal((d_x, d_w)) if d_w != d_x else np.eye(d_x) + 0.1 * rng.standard_normal((d_x, d_x))
    sys = LinSystem(A, B, D)
    return with_gain(sys, np.zeros((d_u, d_x)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
