import numpy as np
import pytest

from kryrom import fem, spla
from kryrom.mesh import build_mesh
from kryrom.sources import quartic_problem


def discretize(dim, level, degree=1):
    space = fem.function_space(build_mesh(dim, level), degree)
    M, A = fem.assemble_operators(space)
    return space, M, A


@pytest.fixture(scope="session")
def quartic_level3():
    space, M, A = discretize(2, 3)
    b = fem.assemble_load(space, quartic_problem().spatial)
    return space, M, A, b, spla.factorize(A)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
