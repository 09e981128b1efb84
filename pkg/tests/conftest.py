import numpy as np
import pytest

from qpdnum.problem import NumProblem, solve_optimum, validate


@pytest.fixture
def two_agent():
    """Two unit-curvature agents sharing x1 + x2 = 2."""
    return validate(NumProblem.quadratic([1.0, 1.0], [0.0, 0.0], [[1.0, 1.0]], [2.0]))


@pytest.fixture
def two_agent_centered():
    """Same dynamics with b = 0, so the optimum is the origin."""
    return validate(NumProblem.quadratic([1.0, 1.0], [0.0, 0.0], [[1.0, 1.0]], [0.0]))


@pytest.fixture
def two_agent_opt(two_agent):
    return solve_optimum(two_agent)


def random_quadratic(rng, M=None, N=None, a_range=(0.5, 3.0)):
    M = int(rng.integers(2, 11)) if M is None else M
    N = int(rng.integers(1, M)) if N is None else N
    a = rng.uniform(*a_range, M)
    c = rng.uniform(-2, 2, M)
    A = rng.uniform(-1, 1, (N, M))
    b = rng.uniform(-2, 2, N)
    return validate(NumProblem.quadratic(a, c, A, b))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
