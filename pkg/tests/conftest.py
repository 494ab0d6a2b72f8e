import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coordbeam.system_model import ChannelSet

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def s2_channels(p_max=4.0):
    """Scalar two-cell instance: unit direct gains, cross amplitude 0.5, unit noise."""
    h = np.array([[[1.0], [0.5]], [[0.5], [1.0]]])
    return ChannelSet(h, 1.0, [0, 1], p_max)


@pytest.fixture
def s2():
    return s2_channels()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
