import numpy as np
import pytest

from andersonlab.lattice import DistributionSpec, build_box


@pytest.fixture
def unit():
    return DistributionSpec.uniform(0, 1)


@pytest.fixture
def box1():
    return build_box(1, 16)[0]


def free_eigenvalues(d, L):
    k = 2 * np.pi * np.arange(L) / L
    one = 2 - 2 * np.cos(k)
    grids = np.meshgrid(*([one] * d), indexing="ij")
    return np.sort(sum(g.ravel() for g in grids))


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
