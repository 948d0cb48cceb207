# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernels; same contract as ``_core_py``."""

import numpy as np
from libc.math cimport fabs, pow, isfinite

DEF AUX_T = 0
DEF AUX_I1 = 1
DEF AUX_I2 = 2
DEF AUX_H1 = 3
DEF AUX_H2 = 4
DEF AUX_GSQ = 5


cdef class ShiftedOperator:
    """Thomas factorisation of ``I - beta * D2`` on ``n`` interior nodes."""

    cdef public int n
    cdef public double dx, beta, off
    cdef double[::1] cprime
    cdef double[::1] inv_den

    def __init__(self, int n, double dx, double beta):
        cdef int i
        cdef double d, den
        self.n = n
        self.dx = dx
        self.beta = beta
        self.off = -beta / (dx * dx)
        d = 1.0 + 2.0 * beta / (dx * dx)
        self.cprime = np.empty(n)
        self.inv_den = np.empty(n)
        den = d
        self.inv_den[0] = 1.0 / den
        self.cprime[0] = self.off / den
        for i in range(1, n):
            den = d - self.off * self.cprime[i - 1]
            self.inv_den[i] = 1.0 / den
            self.cprime[i] = self.off / den

    cdef void solve_into(self, double[::1] rhs, double[::1] out) noexcept nogil:
        cdef int i
        cdef int n = self.n
        out[0] = rhs[0] * self.inv_den[0]
        for i in range(1, n):
            out[i] = (rhs[i] - self.off * out[i - 1]) * self.inv_den[i]
        for i in range(n - 2, -1, -1):
            out[i] = out[i] - self.cprime[i] * out[i + 1]

    def solve(self, rhs):
        cdef double[::1] r = np.ascontiguousarray(rhs, dtype=np.float64)
        out = np.empty(self.n)
        self.solve_into(r, out)
        return out


def make_operator(int n, double dx, double beta):
    return ShiftedOperator(n, dx, beta)


def solve(ShiftedOperator op, rhs):
    return op.solve(rhs)


cdef inline double odd_power(double x, double p) noexcept nogil:
    # p == 0 switches the power source off
    if p == 0.0:
        return 0.0
    if p == 2.0:
        return x
    if p == 3.0:
        return x * fabs(x)
    if p == 4.0:
        return x * x * x
    if x == 0.0:
        return 0.0
    if x > 0.0:
        return pow(x, p - 1.0)
    return -pow(-x, p - 1.0)


def advance(double[::1] y, double[::1] v, double[::1] a, double[::1] g,
            double[:, ::1] m, double[::1] Q, double[::1] aux,
            double[::1] decay, double[::1] c_prev, double[::1] c_new,
            ShiftedOperator op, double dx, double p, double dt, double mass,
            double[:, ::1] f_coef, double[:, ::1] f_prof, int n_steps, bint track_q):
    cdef int n = y.shape[0]
    cdef int ne = n + 1
    cdef int nm = m.shape[0]
    cdef int nf = f_prof.shape[0]
    cdef int step, i, e, j, k
    cdef double inv_dx = 1.0 / dx
    cdef double inv_dx2 = inv_dx * inv_dx
    cdef double gsq_new, gn, h1, h2, left, right, mg, dv, da, vl, vr
    cdef double[::1] g_new = np.empty(ne)
    cdef double[::1] conv = np.empty(ne)
    cdef double[::1] flux = np.empty(ne)
    cdef double[::1] rhs = np.empty(n)
    cdef int done = n_steps
    cdef bint bad

    with nogil:
        for step in range(n_steps):
            for i in range(n):
                v[i] += dt * a[i]
                y[i] += dt * v[i]
            gsq_new = 0.0
            for e in range(ne):
                left = y[e - 1] if e > 0 else 0.0
                right = y[e] if e < n else 0.0
                gn = (right - left) * inv_dx
                g_new[e] = gn
                gsq_new += gn * gn
                conv[e] = 0.0
            gsq_new *= dx
            for j in range(nm):
                for e in range(ne):
                    m[j, e] = decay[j] * m[j, e] + c_prev[j] * g[e] + c_new[j] * g_new[e]
                    conv[e] += m[j, e]
                if track_q:
                    Q[j] = decay[j] * Q[j] + c_prev[j] * aux[AUX_GSQ] + c_new[j] * gsq_new
            for e in range(ne):
                g[e] = g_new[e]
                flux[e] = g_new[e] - conv[e] + odd_power(g_new[e], p)
            aux[AUX_GSQ] = gsq_new
            aux[AUX_T] += dt

            for i in range(n):
                vl = v[i - 1] if i > 0 else 0.0
                vr = v[i + 1] if i < n - 1 else 0.0
                rhs[i] = (flux[i + 1] - flux[i]) * inv_dx + (vl - 2.0 * v[i] + vr) * inv_dx2 \
                    + odd_power(y[i], p)
                for k in range(nf):
                    rhs[i] += f_coef[step, k] * f_prof[k, i]
            op.solve_into(rhs, a)

            h1 = 0.0
            h2 = 0.0
            for e in range(ne):
                mg = mass * g[e] - conv[e]
                dv = ((v[e] if e < n else 0.0) - (v[e - 1] if e > 0 else 0.0)) * inv_dx
                da = ((a[e] if e < n else 0.0) - (a[e - 1] if e > 0 else 0.0)) * inv_dx
                h1 += dv * mg
                h2 += da * mg
            h1 *= dx
            h2 *= dx
            aux[AUX_I1] += 0.5 * dt * (aux[AUX_H1] + h1)
            aux[AUX_I2] += 0.5 * dt * (aux[AUX_H2] + h2)
            aux[AUX_H1] = h1
            aux[AUX_H2] = h2
            bad = not isfinite(h2)
            for i in range(n):
                if not isfinite(a[i]):
                    bad = True
            if bad:
                done = step
                break
    return done
