import json
from pathlib import Path

import numpy as np
import pytest

from anisofem.mesh import Triangulation, generate_uniform

FIXTURES = Path(__file__).parent / "fixtures"

REFERENCE_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@pytest.fixture(scope="session")
def calibration():
    return json.loads((FIXTURES / "calibration.json").read_text())


@pytest.fixture
def uniform4():
    return generate_uniform(4)


@pytest.fixture
def diagonal_square():
    """Unit square split by the diagonal (1,0)-(0,1)."""
    pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    return Triangulation(pts, [[0, 1, 2], [1, 3, 2]])


def center_node(mesh):
    return int(np.argmin(np.hypot(mesh.points[:, 0] - 0.5, mesh.points[:, 1] - 0.5)))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
