import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from lovedecay.errors import MissingHistoryError, OrderingError
from lovedecay.grid import Grid
from lovedecay.history import (HistoryBuffer, ModalMemory, PrescribedHistory, coarsen, make_memory,
                               memory_convolution, mu_prime_tail_norm, mu_tail_norm, product_weights,
                               push_state)
from lovedecay.kernel import ExponentialKernel, PolynomialKernel

GRID = Grid(1.0, 40)
Y = GRID.sine_mode(1, 0.1) + GRID.sine_mode(3, 0.02)
KERNELS = [ExponentialKernel(0.5, 1.0), PolynomialKernel(1.0, 3.0)]


def frozen_buffer(kernel, history, t_end=1.0, steps=50, backend="buffer"):
    mem = make_memory(GRID, kernel, history, backend=backend)
    for t in np.linspace(0, t_end, steps + 1)[1:]:
        push_state(mem, t, history.profile)
    return mem


def yx_sq(y):
    g = GRID.grad(y)
    return GRID.inner_edges(g, g)


def test_zero_history_zero_trajectory():
    hist = PrescribedHistory.zero(GRID)
    for backend in ("buffer", "modal"):
        mem = frozen_buffer(ExponentialKernel(0.5, 1.0), hist, backend=backend)
        assert np.all(memory_convolution(mem) == 0)
        assert mu_tail_norm(mem) == 0 and mu_prime_tail_norm(mem) == 0


@pytest.mark.parametrize("kernel", KERNELS)
@pytest.mark.parametrize("backend", ["buffer", "modal"])
def test_frozen_trajectory_convolution(kernel, backend):
    mem = frozen_buffer(kernel, PrescribedHistory.stationary(Y), backend=backend)
    expected = (1.0 - kernel.ell) * GRID.d2(Y)
    scale = np.max(np.abs(expected))
    assert np.max(np.abs(memory_convolution(mem, kernel) - expected)) <= 1e-9 * scale
    assert mu_tail_norm(mem) <= 1e-12
    assert mu_prime_tail_norm(mem) >= -1e-12


def test_split_invariance():
    kernel = ExponentialKernel(0.5, 1.0)
    mem = make_memory(GRID, kernel, PrescribedHistory.stationary(Y), backend="buffer")
    expected = 0.5 * GRID.d2(Y)
    for t in np.linspace(0.02, 1.0, 50):
        push_state(mem, t, Y)
        np.testing.assert_allclose(memory_convolution(mem, t=t), expected, rtol=0, atol=1e-13)
    # the same field at earlier split points
    for t in (0.0, 0.3, 0.5):
        np.testing.assert_allclose(memory_convolution(mem, t=t), expected, rtol=0, atol=1e-13)


@pytest.mark.parametrize("kernel", KERNELS)
def test_zero_trajectory_stationary_history(kernel):
    buf = HistoryBuffer(GRID, kernel, PrescribedHistory.stationary(Y))
    # current state zero, every past state Y
    buf.push(0.0, GRID.grad(np.zeros(GRID.N)))
    norm = yx_sq(Y)
    assert mu_tail_norm(buf) == pytest.approx((1 - kernel.ell) * norm, rel=1e-9)
    assert mu_prime_tail_norm(buf) == pytest.approx(-float(kernel.mu(0.0)) * norm, rel=1e-9)


@pytest.mark.parametrize("backend", ["buffer", "modal"])
def test_synthetic_saturating_difference(backend):
    # decaying past with rate 1 at t = 0: y_x(0) - y_x(-s) = (1 - e^-s) Y_x
    kernel = ExponentialKernel(0.5, 1.0)
    mem = make_memory(GRID, kernel, PrescribedHistory.decaying(Y, 1.0), backend=backend)
    # int 0.5 e^-s (1 - e^-s)^2 ds = 1/6
    assert mu_tail_norm(mem) == pytest.approx(yx_sq(Y) / 6.0, rel=1e-12)
    # int -0.5 e^-s (1 - e^-s)^2 ds
    assert mu_prime_tail_norm(mem) == pytest.approx(-yx_sq(Y) / 6.0, rel=1e-12)


def test_synthetic_polynomial_by_quadrature():
    kernel = PolynomialKernel(1.0, 3.0)
    hist = PrescribedHistory.decaying(Y, 2.0)
    ref, _ = integrate.quad(lambda s: float(kernel.mu(s)) * (1 - np.exp(-2 * s)) ** 2, 0, np.inf)
    for backend in ("buffer", "modal"):
        mem = make_memory(GRID, kernel, hist, backend=backend)
        assert mu_tail_norm(mem) == pytest.approx(ref * yx_sq(Y), rel=1e-8)


def test_ordering_and_missing_history():
    buf = HistoryBuffer(GRID, ExponentialKernel(0.5, 1.0), PrescribedHistory.stationary(Y))
    with pytest.raises(MissingHistoryError):
        buf.convolution()
    buf.push(0.0, GRID.grad(Y))
    buf.push(0.1, GRID.grad(Y))
    with pytest.raises(OrderingError):
        buf.push(0.1, GRID.grad(Y))
    with pytest.raises(OrderingError):
        buf.push(0.05, GRID.grad(Y))
    with pytest.raises(MissingHistoryError):
        buf.convolution(0.2)
    with pytest.raises(MissingHistoryError):
        buf.convolution(0.05)
    modal = make_memory(GRID, ExponentialKernel(0.5, 1.0), PrescribedHistory.stationary(Y), "modal")
    with pytest.raises(OrderingError):
        modal.push(0.0, GRID.grad(Y))
    with pytest.raises(MissingHistoryError):
        modal.convolution(1.0)


def test_push_then_read_newest():
    buf = HistoryBuffer(GRID, ExponentialKernel(0.5, 1.0), PrescribedHistory.stationary(Y))
    g = GRID.grad(Y)
    buf.push(0.0, g)
    assert buf.t == 0.0 and np.array_equal(buf.g, g)


def test_coarsen_empty_is_noop():
    buf = HistoryBuffer(GRID, ExponentialKernel(0.5, 1.0), PrescribedHistory.stationary(Y),
                        eps_coarsen=1e-9)
    coarsen(buf)
    assert len(buf) == 0


def _forced_trajectory(t):
    return Y * np.cos(3 * t) + GRID.sine_mode(2, 0.05) * np.sin(t)


def test_coarsening_error_after_many_pushes():
    kernel = ExponentialKernel(0.5, 1.0)
    hist = PrescribedHistory.stationary(Y)
    plain = make_memory(GRID, kernel, hist, backend="buffer")
    coarse = make_memory(GRID, kernel, hist, backend="buffer", eps_coarsen=1e-9, coarsen_every=256)
    dt = 2e-3
    for n in range(1, 10_001):
        y = _forced_trajectory(n * dt)
        plain.push_state(n * dt, y)
        coarse.push_state(n * dt, y)
    ref = plain.convolution()
    got = coarse.convolution()
    assert len(coarse) < len(plain)
    assert np.linalg.norm(got - ref) <= 1e-8 * np.linalg.norm(ref)
    assert coarse.tail() == pytest.approx(plain.tail(), rel=1e-8)


@pytest.mark.parametrize("kernel", KERNELS)
def test_modal_matches_buffer(kernel):
    hist = PrescribedHistory.decaying(Y, 0.5)
    buf = make_memory(GRID, kernel, hist, backend="buffer")
    modal = make_memory(GRID, kernel, hist, backend="modal")
    dt = 1e-3
    for n in range(1, 401):
        y = _forced_trajectory(n * dt) * np.exp(-n * dt)
        buf.push_state(n * dt, y)
        modal.push_state(n * dt, y)
    ref = buf.convolution()
    # trapezoid error O(dt^2) against the exact piecewise-linear recursion
    assert np.linalg.norm(modal.convolution() - ref) <= 1e-5 * np.linalg.norm(ref)
    assert modal.tail() == pytest.approx(buf.tail(), rel=1e-4)
    assert modal.prime_tail() == pytest.approx(buf.prime_tail(), rel=1e-4)


def test_convolution_is_additive():
    kernel = ExponentialKernel(0.5, 1.0)
    zero = PrescribedHistory.zero(GRID)
    mems = [make_memory(GRID, kernel, zero, backend="buffer") for _ in range(3)]
    for n in range(1, 101):
        t = 0.01 * n
        a, b = Y * np.sin(t), GRID.sine_mode(2, 0.3) * t
        for mem, y in zip(mems, (a, b, a + b)):
            mem.push_state(t, y)
    total = memory_convolution(mems[0]) + memory_convolution(mems[1])
    np.testing.assert_allclose(memory_convolution(mems[2]), total, rtol=0, atol=1e-12)


def test_kernel_mismatch_is_rejected():
    mem = frozen_buffer(ExponentialKernel(0.5, 1.0), PrescribedHistory.stationary(Y), steps=2)
    with pytest.raises(ValueError):
        memory_convolution(mem, ExponentialKernel(0.4, 1.0))


def test_modal_growing_history_drops_q():
    hist = PrescribedHistory("growing", Y, 0.6)
    mem = ModalMemory(GRID, ExponentialKernel(0.5, 1.0), hist)
    assert not mem.track_q
    assert np.isnan(mem.tail())
    assert np.all(np.isfinite(mem.convolution()))
    assert hist.m0(GRID) == np.inf


def test_history_m0_and_families():
    assert PrescribedHistory.stationary(Y).m0(GRID) == pytest.approx(yx_sq(Y))
    assert PrescribedHistory.decaying(Y, 2.0).m0(GRID) == pytest.approx(yx_sq(Y))
    assert PrescribedHistory.zero(GRID).m0(GRID) == 0.0
    with pytest.raises(ValueError):
        PrescribedHistory.decaying(Y, 0.0)
    with pytest.raises(ValueError):
        PrescribedHistory("sawtooth", Y)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 50.0), st.floats(1e-5, 0.5))
def test_product_weights_exact_for_linear_input(rate, dt):
    decay, c_prev, c_new = product_weights(np.array([rate]), dt)
    # for g = 1 the update must reproduce int_0^dt e^{-r u} du; for g = u it the ramp integral
    full, _ = integrate.quad(lambda u: np.exp(-rate * (dt - u)), 0, dt, epsabs=0, epsrel=1e-13)
    ramp, _ = integrate.quad(lambda u: np.exp(-rate * (dt - u)) * u / dt, 0, dt, epsabs=0, epsrel=1e-13)
    assert decay[0] == pytest.approx(np.exp(-rate * dt), rel=1e-14)
    assert c_prev[0] + c_new[0] == pytest.approx(full, rel=1e-12)
    assert c_new[0] == pytest.approx(ramp, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4))
def test_tails_have_sign(coeffs):
    kernel = ExponentialKernel(0.5, 1.0)
    mem = make_memory(GRID, kernel, PrescribedHistory.decaying(Y, 0.3), backend="buffer")
    for n, c in enumerate(coeffs, start=1):
        mem.push_state(0.1 * n, c * Y + GRID.sine_mode(2, c**2))
    assert mu_tail_norm(mem) >= 0
    assert mu_prime_tail_norm(mem) <= 0
