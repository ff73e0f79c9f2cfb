import sys
import warnings

import numpy as np
import pytest

from cgowave.geometry import build_cross_section, build_grid

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session")
def disk():
    return build_cross_section({"disk": 1.0, "segments": 64})


@pytest.fixture(scope="session")
def coarse_grid(disk):
    return build_grid(disk, 0.1, 0.1, 2.0, pad=0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
