import math

import pytest

from hypspots.mesh import DomainSpec, triangulate

# acceptance results, filled by test_acceptance.py and echoed at the end of the run
ACCEPTANCE_LINES = []

# irregular convex pentagon with model-straight edges, hyperbolic area about 34.64
PENTAGON = [
    [0.8241, 0.534],
    [0.5325, 0.7855],
    [-0.4634, 0.8499],
    [-0.9202, -0.0834],
    [0.8923, -0.3753],
]


@pytest.fixture(scope="session")
def disk1_mesh():
    return triangulate(DomainSpec.disk(1.0), 0.2)


@pytest.fixture(scope="session")
def disk3_mesh():
    return triangulate(DomainSpec.disk(3.0), 0.2)


@pytest.fixture(scope="session")
def small_disk_mesh():
    # about 200 vertices
    return triangulate(DomainSpec.disk(0.8), 0.15)


@pytest.fixture(scope="session")
def pentagon_spec():
    return DomainSpec.polygon(PENTAGON, edges="euclidean")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def approx_rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


__all__ = ["ACCEPTANCE_LINES", "PENTAGON", "approx_rel", "math"]
