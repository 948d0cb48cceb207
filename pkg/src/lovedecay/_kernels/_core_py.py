"""Pure numpy implementation of the stepping kernels.

Mirrors ``_core.pyx`` call-for-call; used when the compiled extension is not
available or when ``LOVEDECAY_PURE=1`` is set.
"""

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

AUX_T, AUX_I1, AUX_I2, AUX_H1, AUX_H2, AUX_GSQ = range(6)


class ShiftedOperator:
    """Factorisation of ``I - beta * D2`` on ``n`` interior nodes (banded Cholesky)."""

    def __init__(self, n, dx, beta):
        self.n = n
        self.dx = dx
        self.beta = beta
        off = -beta / dx**2
        ab = np.empty((2, n))
        ab[0, 0] = 0.0
        ab[0, 1:] = off
        ab[1, :] = 1.0 + 2.0 * beta / dx**2
        self._chol = cholesky_banded(ab, lower=False)

    def solve(self, rhs):
        return cho_solve_banded((self._chol, False), rhs, check_finite=False)


def make_operator(n, dx, beta):
    return ShiftedOperator(n, dx, beta)


def solve(op, rhs):
    return op.solve(np.asarray(rhs, dtype=float))


def _grad(y, dx):
    out = np.empty(y.size + 1)
    out[0] = y[0]
    out[1:-1] = y[1:] - y[:-1]
    out[-1] = -y[-1]
    return out / dx


def _odd_power(x, p):
    # p == 0 switches the power source off
    if p == 0.0:
        return np.zeros_like(x)
    if p == 2.0:
        return x
    if p == 3.0:
        return x * np.abs(x)
    if p == 4.0:
        return x * x * x
    return np.sign(x) * np.abs(x) ** (p - 1.0)


def advance(y, v, a, g, m, Q, aux, decay, c_prev, c_new, op, dx, p, dt, mass,
            f_coef, f_prof, n_steps, track_q):
    """Advance the modal scheme ``n_steps`` steps in place.

    Returns the number of steps completed; fewer than ``n_steps`` means the
    last completed step produced a non-finite acceleration.
    """
    # divergence is reported through the return value, not floating-point warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _advance(y, v, a, g, m, Q, aux, decay, c_prev, c_new, op, dx, p, dt, mass,
                        f_coef, f_prof, n_steps, track_q)


def _advance(y, v, a, g, m, Q, aux, decay, c_prev, c_new, op, dx, p, dt, mass,
             f_coef, f_prof, n_steps, track_q):
    inv_dx = 1.0 / dx
    inv_dx2 = inv_dx * inv_dx
    dcol = decay[:, None]
    pcol = c_prev[:, None]
    ncol = c_new[:, None]
    n_forcing = f_prof.shape[0]
    for step in range(n_steps):
        v += dt * a
        y += dt * v
        g_new = _grad(y, dx)
        gsq_new = dx * float(g_new @ g_new)
        m *= dcol
        m += pcol * g
        m += ncol * g_new
        if track_q:
            Q *= decay
            Q += c_prev * aux[AUX_GSQ] + c_new * gsq_new
        g[:] = g_new
        aux[AUX_GSQ] = gsq_new
        aux[AUX_T] += dt
        conv = m.sum(axis=0)

        flux = g - conv + _odd_power(g, p)
        rhs = (flux[1:] - flux[:-1]) * inv_dx
        vpad = np.concatenate(([0.0], v, [0.0]))
        rhs += (vpad[:-2] - 2.0 * v + vpad[2:]) * inv_dx2
        rhs += _odd_power(y, p)
        if n_forcing:
            rhs += f_coef[step] @ f_prof
        a[:] = op.solve(rhs)

        mg = mass * g - conv
        h1 = dx * float(_grad(v, dx) @ mg)
        h2 = dx * float(_grad(a, dx) @ mg)
        aux[AUX_I1] += 0.5 * dt * (aux[AUX_H1] + h1)
        aux[AUX_I2] += 0.5 * dt * (aux[AUX_H2] + h2)
        aux[AUX_H1] = h1
        aux[AUX_H2] = h2
        if not np.isfinite(h2) or not np.all(np.isfinite(a)):
            return step
    return n_steps
