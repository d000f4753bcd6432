import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from atais.bench.linear import LinearModel
from atais.experiments import toy_setup as _toy_setup
from atais.model import Dataset

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def toy_setup():
    """Seeded toy dataset with its certified grid oracle."""
    return _toy_setup()


@pytest.fixture
def unit_interval_model():
    """``f(theta) = theta``, one observation ``y = 0.5``, prior on [0, 1]."""
    return LinearModel([[1.0]], Dataset([0.5]), [0.0], [1.0])


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
