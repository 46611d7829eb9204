import numpy as np
import pytest

from varac.models import chain3, geo


@pytest.fixture
def geo_model():
    return geo()


@pytest.fixture
def chain_model():
    return chain3()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
