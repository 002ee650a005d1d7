import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from covnet.network import build_layers, fan_network  # noqa: E402
from covnet.targets import generate_shape  # noqa: E402
from covnet.training import DesiredPlan  # noqa: E402

SQUARE_RADIUS = 10 * math.sqrt(2)


@pytest.fixture(scope="session")
def fan26():
    return fan_network(5, 2)


@pytest.fixture(scope="session")
def net26(fan26):
    return build_layers(fan26.graph, fan26.boundary, fan26.core, fan26.n)


@pytest.fixture(scope="session")
def ellipse500():
    return generate_shape("ellipse", 500, seed=7)


@pytest.fixture(scope="session")
def plan26(net26, fan26, ellipse500):
    return DesiredPlan.build(net26, fan26.leader_positions, ellipse500)


@pytest.fixture(scope="session")
def fan57():
    return fan_network(4, 3, radius=SQUARE_RADIUS)


@pytest.fixture(scope="session")
def net57(fan57):
    return build_layers(fan57.graph, fan57.boundary, fan57.core, fan57.n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE[number] = (passed, detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
