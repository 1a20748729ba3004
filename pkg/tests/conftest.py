import sys

import numpy as np
import pytest

from blamebench.models import fit_logistic
from blamebench.synthdata import LINEAR_2X0_MINUS_X1, generate_seneca_rc


@pytest.fixture(scope="session")
def linear_ds():
    """Y = 2 x0 - x1 data, 1000 rows, noise 0.3."""
    return generate_seneca_rc(LINEAR_2X0_MINUS_X1, 1000, 0.3, 0, seed=0)


@pytest.fixture(scope="session")
def linear_logistic(linear_ds):
    return fit_logistic(linear_ds, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for block in sorted(mod.RESULTS):
        terminalreporter.write_line(block)
