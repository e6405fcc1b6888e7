import numpy as np
import pytest

from thermohaptics.acoustic_field import PlaneSpec, field_on_plane
from thermohaptics.array_model import build_dual_array, focus_phases
from thermohaptics.thermal_model import default_stack

FOCUS = (0.0, 0.0, 0.200)


@pytest.fixture(scope="session")
def layout():
    return build_dual_array()


@pytest.fixture(scope="session")
def drive(layout):
    return focus_phases(layout, FOCUS)


@pytest.fixture(scope="session")
def focal_field(layout, drive):
    """Unit-amplitude field on a 51 x 51, 1 mm grid centred on the focus."""
    return field_on_plane(layout, drive, PlaneSpec.centered(FOCUS, 51, 1e-3))


@pytest.fixture(scope="session")
def sp_stack():
    return default_stack("SP")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
