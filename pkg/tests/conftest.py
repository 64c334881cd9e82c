import numpy as np
import pytest

from mono3d.geometry import CameraIntrinsics

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def k700():
    return CameraIntrinsics(700.0, 700.0, 600.0, 180.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
