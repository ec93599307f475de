import numpy as np
import pytest

from surfns.mesh import PAPER_DOMAIN, BoxDomain, build_uniform_mesh


@pytest.fixture(scope="session")
def mesh_05():
    return build_uniform_mesh(PAPER_DOMAIN, 0.5)


@pytest.fixture(scope="session")
def mesh_025():
    return build_uniform_mesh(PAPER_DOMAIN, 0.25)


@pytest.fixture(scope="session")
def unit_cube_mesh():
    return build_uniform_mesh(BoxDomain((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one verdict line per acceptance criterion for the terminal summary."""

    def record(criterion, passed, detail):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
