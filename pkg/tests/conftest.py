import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uaad.core_io import LagConfig
from uaad.synth import SynthConfig, generate

settings.register_profile("uaad", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("uaad")


@pytest.fixture(scope="session")
def small_data():
    """Ten minutes, 8 channels, moderate noise."""
    return generate(SynthConfig(C=8, duration=600.0, noise_power=50.0, seed=3))


@pytest.fixture(scope="session")
def small_lag():
    return LagConfig(L_x=5, L_s=5, S=2, K=2)


@pytest.fixture(scope="session")
def small_segs(small_data, small_lag):
    return small_data.segments(small_lag, 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
