import numpy as np
import pytest

from cgmevents import kernels, synth


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Each kernel-backed test runs once per available backend."""
    return kernels.get_backend(request.param)


@pytest.fixture(scope="session")
def default_trace():
    """The default synthetic trace (seed 42) shared across modules."""
    return synth.generate(synth.SynthConfig(seed=42))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k])
