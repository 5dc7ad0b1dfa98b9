import numpy as np
import pytest

from jamcons.config import initial_state
from jamcons.graph import build_graph
from jamcons.schedule import ProtocolParams

RING6 = [[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 0], [1, 4]]
DET_DELTA = [0.001 + 0.0001 * (j + 2) for j in range(6)]


@pytest.fixture(scope="session")
def g6():
    return build_graph(6, RING6)


@pytest.fixture(scope="session")
def x0():
    return initial_state(6, 7)


@pytest.fixture(scope="session")
def det_params():
    return ProtocolParams.build(6, DET_DELTA, "delta/1.01", 0.02)


@pytest.fixture(scope="session")
def aware_params():
    return ProtocolParams.build(6, 0.001, "delta/1.01", 0.02)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1][1:].rstrip(":").rstrip("abc"))):
            terminalreporter.write_line(line)
