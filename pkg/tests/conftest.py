import numpy as np
import pytest

from gfflab import graphs, green

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion_report():
    def record(num: int, desc: str, passed: bool, detail: str = ""):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {num:2d} [{status}] {desc}"
        if detail:
            line += f"  -- {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def k4():
    return graphs.complete_graph(4)


@pytest.fixture(scope="session")
def mg4(k4):
    return graphs.midpoint_graph(k4)


@pytest.fixture(scope="session")
def cov4(k4):
    return green.covariance_table(green.zero_average_green(k4))


@pytest.fixture(scope="session")
def g64():
    return graphs.build_random_regular(64, 3, 42)


@pytest.fixture(scope="session")
def mg64(g64):
    return graphs.midpoint_graph(g64)


@pytest.fixture(scope="session")
def g2000():
    return graphs.build_random_regular(2000, 3, 5)


def lazy_dense(g):
    """Dense lazy-walk matrix, assembled independently of the library path."""
    n, d = g.n_vertices, g.degree
    p = np.zeros((n, n))
    for x in range(n):
        for y in g.adjacency[x]:
            p[x, int(y)] += 1.0 / (2 * d)
        p[x, x] += 0.5
    return p
