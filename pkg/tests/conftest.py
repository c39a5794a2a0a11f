import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from conformal_plateau.geometry import ChartGrid, ConformalFactor, MetricField, make_domain

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def flat_metric(grid: ChartGrid) -> MetricField:
    n = grid.dim_n
    return MetricField.from_sigma(np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy())


def diag_metric(grid: ChartGrid, diag) -> MetricField:
    sigma = np.zeros(grid.shape + (grid.dim_n, grid.dim_n))
    for i, v in enumerate(diag):
        sigma[..., i, i] = v
    return MetricField.from_sigma(sigma)


def const_phi(grid: ChartGrid, c: float = 1.0) -> ConformalFactor:
    return ConformalFactor(phi=np.full(grid.shape, float(c)), log_phi_grad=np.zeros((grid.dim_n,) + grid.shape))


def full_domain(grid, g):
    return make_domain(grid, g, np.ones(grid.shape, dtype=bool))


@pytest.fixture
def unit_square():
    grid = ChartGrid(((0.0, 1.0), (0.0, 1.0)), (21, 21))
    g = flat_metric(grid)
    return grid, g, full_domain(grid, g)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
