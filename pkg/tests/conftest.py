import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fnes.core import EllipticTensor, GridSpec
from fnes.problems import builtin_tensor

settings.register_profile(
    "fnes", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("FNES_HYPOTHESIS_PROFILE", "fnes"))

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cr():
    return builtin_tensor("cauchy-riemann")


@pytest.fixture(scope="session")
def dirac():
    return builtin_tensor("dirac")


@pytest.fixture
def grid3():
    return GridSpec.cube(3, 12, 1.0)


def perturbed_dirac(seed, size=0.1):
    """Dirac tensor plus a small random perturbation; stays elliptic for size <= 0.1."""
    r = np.random.default_rng(seed)
    base = builtin_tensor("dirac").entries
    return EllipticTensor(base + size * r.standard_normal(base.shape) / np.sqrt(base.size))
