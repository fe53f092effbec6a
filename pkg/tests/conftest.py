import numpy as np
import pytest

from landau_lab.landau import LandauParams, truncated_background
from landau_lab.spectral import Grid


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


@pytest.fixture(scope="session")
def grid24():
    return Grid(24)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


@pytest.fixture(scope="session")
def background24(grid24):
    return truncated_background(LandauParams.for_grid(5.0, grid24), grid24)


@pytest.fixture(scope="session")
def background32(grid32):
    return truncated_background(LandauParams.for_grid(5.0, grid32), grid32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[n])
