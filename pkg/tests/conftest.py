import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hybridobs import pipeline
from hybridobs.scenario import bundled_ring4

settings.register_profile(
    "repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# the bundled four-agent ring: two oscillators, each agent measures one coordinate
A_RING = np.array([[0., 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 2], [0, 0, -2, 0]])
DECAY = math.exp(-0.1)


@pytest.fixture(scope="session")
def ring_file():
    return bundled_ring4()


@pytest.fixture(scope="session")
def ring_design(ring_file):
    return pipeline.design(ring_file)


@pytest.fixture(scope="session")
def ring_certified(ring_file, ring_design):
    return pipeline.certify(ring_file, ring_design.decomp, ring_design.gains)


def coord_basis(n, idx):
    """Orthonormal basis of the coordinate plane spanned by ``e_k``, k in idx."""
    return np.eye(n)[:, list(idx)]


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
