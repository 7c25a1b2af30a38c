import numpy as np
import pytest

from antibunch import fourier_coefficients, synthesize_levels, waiting_time_table

SQRT20 = np.sqrt(20.0)
# T and H of the reference four-level example (H in units of 2πΩ/√20)
GOLDEN_T = np.array([
    [0.5, 0.5, 0.5, 0.5],
    [-3 / SQRT20, -1 / SQRT20, 1 / SQRT20, 3 / SQRT20],
    [0.5, -0.5, -0.5, 0.5],
    [1 / SQRT20, -3 / SQRT20, 3 / SQRT20, -1 / SQRT20],
])
GOLDEN_H_UNITS = np.array([
    [0, -10, 0, 0],
    [-10, 0, -8, 0],
    [0, -8, 0, 6],
    [0, 0, 6, 0],
], dtype=float)

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def golden_system():
    return synthesize_levels(4)


@pytest.fixture(scope="session")
def figure_tables():
    """Waiting-time tables for the figure parameters: n/2 Fourier terms, γ = 100Ω."""
    return {n: waiting_time_table(fourier_coefficients(n // 2).series(), 100.0) for n in (2, 4, 8, 16)}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
