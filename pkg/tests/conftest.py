import numpy as np
import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full acceptance-gate runs (slow)")
    config.addinivalue_line("markers", "slow: individually slow tests")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
