import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bohmian_hhg.core import SpatialGrid, Wavefunction

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_grid():
    return SpatialGrid(-40.0, 40.0, 1024)


def gaussian(grid, x0=0.0, s=1.0, k=0.0, t=0.0):
    x = grid.x
    amp = np.exp(-(x - x0) ** 2 / (4 * s * s) + 1j * k * x)
    return Wavefunction(grid, amp, t).normalized()


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import REPORT
    if REPORT:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
