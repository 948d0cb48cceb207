import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lovedecay.grid import Grid, d1_apply, d2_apply, lp_norm, poincare_constant, solve_shifted
from oracles import dense_d2

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_d2_hand_stencil():
    grid = Grid(1.0, 3)
    assert grid.dx == 0.25
    np.testing.assert_allclose(d2_apply(grid, [0.0, 1.0, 0.0]), [16.0, -32.0, 16.0])
    assert np.all(d2_apply(grid, np.zeros(3)) == 0)


def test_d2_sine_truncation():
    grid = Grid(1.0, 200)
    u = grid.sine_mode(1)
    err = np.max(np.abs(d2_apply(grid, u) + math.pi**2 * u))
    assert err <= math.pi**4 / 12 * grid.dx**2 * 1.01


def test_d1_linear_and_sine():
    grid = Grid(1.0, 50)
    d = d1_apply(grid, grid.x)
    np.testing.assert_allclose(d[1:-1], 1.0, rtol=1e-12)
    fine = Grid(1.0, 400)
    err = np.max(np.abs(d1_apply(fine, fine.sine_mode(1)) - math.pi * np.cos(math.pi * fine.x)))
    assert err < 2 * math.pi**3 / 6 * fine.dx**2


def test_solve_shifted_hand_system():
    grid = Grid(1.0, 3)
    A = np.eye(3) - dense_d2(3, 0.25)
    np.testing.assert_allclose(solve_shifted(grid, [1.0, 0.0, 0.0]), np.linalg.solve(A, [1.0, 0.0, 0.0]),
                               rtol=1e-13)
    assert np.all(solve_shifted(grid, np.zeros(3)) == 0)
    with pytest.raises(ValueError):
        solve_shifted(grid, np.zeros(3), alpha=-1.0)


@pytest.mark.parametrize("N", [3, 17, 200])
@pytest.mark.parametrize("alpha", [0.0, 0.01])
def test_solve_shifted_round_trip(N, alpha):
    grid = Grid(2.0, N)
    w = np.random.default_rng(N).standard_normal(N)
    rhs = w - (1 + alpha) * d2_apply(grid, w)
    assert np.max(np.abs(solve_shifted(grid, rhs, alpha) - w)) <= 1e-12 * max(1.0, np.abs(w).max())


def test_lp_norm_sine():
    grid = Grid(1.0, 200)
    u = grid.sine_mode(1)
    assert lp_norm(grid, np.zeros(200), 2) == 0
    assert lp_norm(grid, u, 2) == pytest.approx(0.5, abs=grid.dx**2)
    assert lp_norm(grid, u, 3) == pytest.approx(4 / (3 * math.pi), abs=grid.dx**2)


@pytest.mark.parametrize("L, C", [(1.0, 1 / math.pi), (math.pi, 1.0), (2.0, 2 / math.pi)])
def test_poincare_constant(L, C):
    assert poincare_constant(Grid(L, 10)) == pytest.approx(C, rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 12, elements=finite), arrays(float, 12, elements=finite))
def test_d2_symmetric_negative(u, v):
    grid = Grid(1.3, 12)
    scale = 1.0 + np.abs(u).max() * np.abs(v).max() / grid.dx**2
    assert abs(grid.inner(d2_apply(grid, u), v) - grid.inner(u, d2_apply(grid, v))) <= 1e-12 * scale
    assert grid.inner(d2_apply(grid, u), u) <= 1e-12 * scale


@settings(max_examples=50, deadline=None)
@given(arrays(float, 9, elements=finite))
def test_summation_by_parts(u):
    grid = Grid(0.7, 9)
    g = grid.grad(u)
    lhs = -grid.inner(d2_apply(grid, u), u)
    assert lhs == pytest.approx(grid.inner_edges(g, g), rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(grid.integrate_edges(g), u, atol=1e-12 * (1 + np.abs(u).max()))


@settings(max_examples=30, deadline=None)
@given(arrays(float, 120, elements=finite))
def test_discrete_poincare(u):
    grid = Grid(1.0, 120)
    g = grid.grad(u)
    assert math.sqrt(grid.inner(u, u)) <= 1.05 * poincare_constant(grid) * math.sqrt(grid.inner_edges(g, g)) + 1e-300


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(0.0, 10)
    with pytest.raises(ValueError):
        Grid(1.0, 2)
