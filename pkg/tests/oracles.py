"""Brute-force references built from dense matrices and direct quadrature.

Nothing here calls the package's stepping, memory or stencil code.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss


def dense_d2(N, dx):
    return (np.diag(-2.0 * np.ones(N)) + np.diag(np.ones(N - 1), 1) + np.diag(np.ones(N - 1), -1)) / dx**2


def dense_grad(N, dx):
    G = np.zeros((N + 1, N))
    for e in range(N + 1):
        if e < N:
            G[e, e] += 1.0
        if e > 0:
            G[e, e - 1] -= 1.0
    return G / dx


def past_integral(mu, times, values, t_now, order=24):
    """``int_0^{t_now} mu(t_now - tau) u(tau) dtau`` for ``u`` linear between ``times``."""
    nodes, weights = leggauss(order)
    total = np.zeros_like(values[0])
    for k in range(len(times) - 1):
        a, b = times[k], times[k + 1]
        if b > t_now + 1e-15:
            break
        tau = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        w = 0.5 * (b - a) * weights
        lam = (tau - a) / (b - a)
        for ti, wi, li in zip(tau, w, lam):
            total = total + wi * mu(t_now - ti) * ((1 - li) * values[k] + li * values[k + 1])
    return total


def dense_exponential_run(N, L, dt, steps, a, b, Y, y1, p=2.0, damping_implicit=True):
    """Steps of the semi-implicit scheme with explicit inverses, stationary past ``Y``.

    Only ``p = 2`` (linear source ``y + y_xx``) is supported.
    """
    assert p == 2.0
    dx = L / (N + 1)
    D2 = dense_d2(N, dx)
    alpha = dt if damping_implicit else 0.0
    Ainv = np.linalg.inv(np.eye(N) - (1.0 + alpha) * D2)
    mu = lambda s: a * np.exp(-b * s)

    def memory(times, ys, t_now):
        recent = past_integral(mu, times, [D2 @ y for y in ys], t_now)
        return recent + (a / b) * np.exp(-b * t_now) * (D2 @ Y)

    def accel(y, v, times, ys, t_now):
        return Ainv @ (D2 @ y + D2 @ v - memory(times, ys, t_now) + y + D2 @ y)

    y = Y.copy()
    v = y1.copy()
    times, ys = [0.0], [y.copy()]
    acc = accel(y, v, times, ys, 0.0)
    out = [(y.copy(), v.copy(), acc.copy())]
    for n in range(1, steps + 1):
        v = v + dt * acc
        y = y + dt * v
        t = n * dt
        times.append(t)
        ys.append(y.copy())
        acc = accel(y, v, times, ys, t)
        out.append((y.copy(), v.copy(), acc.copy()))
    return out, times, ys


def xi_bruteforce(N, L, a, b, Y, states, times, ys):
    """``xi`` at the last state of a dense run, by direct quadrature and trapezoid sums."""
    dx = L / (N + 1)
    G = dense_grad(N, dx)
    mu = lambda s: a * np.exp(-b * s)
    mass = a / b

    def diamond(k):
        t = times[k]
        past = past_integral(mu, times, ys, t) + (a / b) * np.exp(-b * t) * Y
        return mass * ys[k] - past

    h1, h2 = [], []
    for k, (y, v, acc) in enumerate(states):
        dg = G @ diamond(k)
        h1.append(dx * float((G @ v) @ dg))
        h2.append(dx * float((G @ acc) @ dg))
    t = np.asarray(times)
    trap = lambda h: float(np.sum(0.5 * np.diff(t) * (np.asarray(h[1:]) + np.asarray(h[:-1]))))
    inst = -dx * float(states[-1][1] @ diamond(len(states) - 1))
    return inst - trap(h1) - trap(h2)
