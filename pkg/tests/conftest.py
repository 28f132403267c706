import sys

import numpy as np
import pytest

from photospin.params import DeviceParams, load_preset
from photospin.protocol import run_protocol


@pytest.fixture(scope="session")
def strong_run():
    return run_protocol(*load_preset("strong"))


@pytest.fixture(scope="session")
def weak_run():
    return run_protocol(*load_preset("weak"))


@pytest.fixture(scope="session")
def st_run():
    return run_protocol(*load_preset("st"))


@pytest.fixture
def params():
    return DeviceParams().validate()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
