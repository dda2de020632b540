import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dualorlicz import SphericalGrid

settings.register_profile("default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_line():
    """Record a one-line PASS/FAIL summary for the terminal report."""

    def emit(label: str, passed: bool, detail: str = "") -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def grid2():
    return SphericalGrid(2, 256)


@pytest.fixture
def grid3():
    return SphericalGrid(3, 256)


def ellipse_h(theta, a, b):
    return np.sqrt(a**2 * np.cos(theta) ** 2 + b**2 * np.sin(theta) ** 2)
