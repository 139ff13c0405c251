import math

import numpy as np
import pytest

from bresse.discretization import make_grid
from bresse.model import BeamParams

# criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


@pytest.fixture
def unit_params():
    return BeamParams(1.0, 1.0, 1.0, 1.0, 1.0, L=1.0, ell=0.0)


@pytest.fixture
def arch():
    """Beam on [0, pi] with curvature 0.2 (cap 0.5)."""
    return BeamParams(1.0, 1.0, 1.0, 1.0, 1.0, L=math.pi, ell=0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid32():
    return make_grid(math.pi, 32)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")
