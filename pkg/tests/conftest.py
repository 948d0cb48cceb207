import time

import pytest

from lovedecay.grid import Grid
from lovedecay.history import PrescribedHistory
from lovedecay.kernel import ExponentialKernel, PolynomialKernel
from lovedecay.solver import SolverConfig, run

ACCEPTANCE_LINES = []


def canonical_setup(kernel, T_final, sample_stride=1):
    grid = Grid(1.0, 200)
    history = PrescribedHistory.stationary(grid.sine_mode(1, 0.1))
    cfg = SolverConfig(dt=1e-3, p=3.0, T_final=T_final, sample_stride=sample_stride, keep_states=True)
    return cfg, grid, kernel, history


@pytest.fixture(scope="session")
def exp_run():
    """Exponential kernel, every step sampled; returns ``(trace, wall seconds)``."""
    cfg, grid, kernel, history = canonical_setup(ExponentialKernel(0.5, 1.0), 20.0)
    start = time.perf_counter()
    trace = run(cfg, grid, kernel, history)
    return trace, time.perf_counter() - start


@pytest.fixture(scope="session")
def poly_run():
    cfg, grid, kernel, history = canonical_setup(PolynomialKernel(1.0, 3.0), 100.0, sample_stride=10)
    start = time.perf_counter()
    trace = run(cfg, grid, kernel, history)
    return trace, time.perf_counter() - start


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
