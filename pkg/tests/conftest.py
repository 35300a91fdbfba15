import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from markovgf.markov import SwitchKernel

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def k23():
    return SwitchKernel(0.2, 0.3)


@pytest.fixture
def k9():
    return SwitchKernel(0.9, 0.9)


@pytest.fixture
def k1():
    return SwitchKernel(0.1, 0.1)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_log(request):
    """Append one PASS/FAIL line to the acceptance summary."""
    return request.config.stash[_ACCEPTANCE].append


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
