"""Prescribed past, stored trajectory and the hereditary convolution.

Two memory backends share one duck-typed interface (``mass``, ``t``, ``g``,
``push``, ``convolution``, ``tail``, ``prime_tail``):

``HistoryBuffer``
    Stores edge gradients of every computed state and evaluates the memory
    integrals by product quadrature over the records, adding the prescribed past
    for ``s > t`` by quadrature. Cost per evaluation grows with the number of
    records; optional coarsening merges old, lightly weighted records.

``ModalMemory``
    Uses a sum-of-exponentials form of the kernel so that every integral obeys
    a one-step recursion (exact for piecewise-linear-in-time gradients). This is
    what the time stepper uses; ``HistoryBuffer`` is the direct reference.

All spatial integrals of edge quantities use ``dx``-weighted sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, MissingHistoryError, OrderingError
from .grid import Grid
from .kernel import ExponentialKernel, MemoryKernel

EPS_TAIL = 1e-10
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)
TIME_RTOL = 1e-12


# --------------------------------------------------------------------------
# Prescribed past  y(x, -tau) = theta(tau) * Y(x),  tau >= 0
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PrescribedHistory:
    """Separable prescribed past ``y0(x, tau) = theta(tau) Y(x)``.

    ``family`` is one of ``zero``, ``stationary`` (``theta = 1``), ``decaying``
    (``theta = exp(-rate tau)``). Manufactured-solution runs additionally use
    ``growing`` (``theta = exp(rate tau)``) and ``cosine`` (``theta = cos(rate tau)``).
    """

    family: str
    profile: np.ndarray
    rate: float = 0.0

    def __post_init__(self):
        if self.family not in ("zero", "stationary", "decaying", "growing", "cosine"):
            raise ValueError(f"unknown history family {self.family!r}")
        if self.family == "decaying" and self.rate <= 0:
            raise ValueError("decaying history needs rate > 0")
        profile = np.asarray(self.profile, dtype=float)
        if self.family == "zero":
            profile = np.zeros_like(profile)
        object.__setattr__(self, "profile", profile)

    @classmethod
    def zero(cls, grid: Grid):
        return cls("zero", grid.zeros())

    @classmethod
    def stationary(cls, profile):
        return cls("stationary", np.asarray(profile, dtype=float))

    @classmethod
    def decaying(cls, profile, rate: float):
        return cls("decaying", np.asarray(profile, dtype=float), rate)

    def theta(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.family == "zero":
            return np.zeros_like(tau)
        if self.family == "stationary":
            return np.ones_like(tau)
        if self.family == "decaying":
            return np.exp(-self.rate * tau)
        if self.family == "growing":
            return np.exp(self.rate * tau)
        return np.cos(self.rate * tau)

    def at(self, tau: float) -> np.ndarray:
        """Nodal field of the past at ``tau`` time units before 0."""
        return float(self.theta(tau)) * self.profile

    def laplace(self, r):
        """``int_0^inf exp(-r tau) theta(tau) dtau`` (``inf`` when divergent)."""
        r = np.asarray(r, dtype=float)
        if self.family == "zero":
            return np.zeros_like(r)
        if self.family == "stationary":
            return 1.0 / r
        if self.family == "decaying":
            return 1.0 / (r + self.rate)
        if self.family == "growing":
            with np.errstate(divide="ignore"):
                return np.where(r > self.rate, 1.0 / (r - self.rate), np.inf)
        return r / (r * r + self.rate**2)

    def laplace_sq(self, r):
        """``int_0^inf exp(-r tau) theta(tau)^2 dtau``."""
        r = np.asarray(r, dtype=float)
        if self.family == "zero":
            return np.zeros_like(r)
        if self.family == "stationary":
            return 1.0 / r
        if self.family == "decaying":
            return 1.0 / (r + 2.0 * self.rate)
        if self.family == "growing":
            with np.errstate(divide="ignore"):
                return np.where(r > 2.0 * self.rate, 1.0 / (r - 2.0 * self.rate), np.inf)
        return 0.5 * (1.0 / r + r / (r * r + 4.0 * self.rate**2))

    def m0(self, grid: Grid) -> float:
        """``sup_tau int |y0_x(tau)|^2 dx``."""
        g = grid.grad(self.profile)
        base = grid.inner_edges(g, g)
        if self.family == "growing":
            return math.inf if base > 0 else 0.0
        return base


def history_from_spec(spec: dict, profile, grid: Grid) -> PrescribedHistory:
    family = spec.get("family", "stationary")
    if family == "zero":
        return PrescribedHistory.zero(grid)
    if family == "stationary":
        return PrescribedHistory.stationary(profile)
    if family == "decaying":
        return PrescribedHistory.decaying(profile, float(spec["rate"]))
    raise KeyError(f"unknown history family {family!r}")


def _prescribed_weights(kernel: MemoryKernel, hist: PrescribedHistory, t: float, deriv: bool,
                        s_span: float):
    """``(int_t^inf w, int_t^inf w theta, int_t^inf w theta^2)`` with ``w = mu`` or ``mu'``.

    ``theta`` is evaluated at ``s - t``. Exponential kernels use closed forms;
    other kernels use adaptive quadrature on ``[t, t + s_span]`` plus the
    analytic tail of the kernel mass.
    """
    if hist.family == "zero":
        w0 = -float(kernel.mu(t)) if deriv else kernel.tail_mass(t)
        return w0, 0.0, 0.0
    if isinstance(kernel, ExponentialKernel):
        scale = kernel.a * math.exp(-kernel.b * t) * (-kernel.b if deriv else 1.0)
        return (scale / kernel.b, scale * float(hist.laplace(kernel.b)),
                scale * float(hist.laplace_sq(kernel.b)))
    if hist.family in ("growing",):
        raise DomainError("growing histories need an exponential kernel in the direct backend")
    weight = kernel.dmu if deriv else kernel.mu
    out = []
    for power in (0, 1, 2):
        if power == 0:
            out.append(-float(kernel.mu(t)) if deriv else kernel.tail_mass(t))
            continue
        head, _ = integrate.quad(lambda s: float(weight(s)) * float(hist.theta(s - t)) ** power,
                                 t, t + s_span, epsabs=EPS_TAIL, epsrel=1e-12, limit=400)
        # beyond the span: theta^power is bounded by its value there for monotone theta
        end_theta = float(hist.theta(s_span)) ** power if hist.family != "cosine" else 0.0
        # int_cut^inf mu = tail_mass(cut), int_cut^inf mu' = -mu(cut)
        cut = t + s_span
        tail = -float(kernel.mu(cut)) if deriv else kernel.tail_mass(cut)
        out.append(head + tail * end_theta)
    return tuple(out)


# --------------------------------------------------------------------------
# Direct backend
# --------------------------------------------------------------------------


class HistoryBuffer:
    """Records of ``(t, edge gradient)`` at step resolution, optionally coarsened.

    The stored gradients are interpolated linearly in time over ``s in [0, t]``;
    ``s > t`` is covered by the prescribed past.
    """

    def __init__(self, grid: Grid, kernel: MemoryKernel, history: PrescribedHistory,
                 eps_coarsen: float | None = None, coarsen_every: int = 256,
                 s_span: float | None = None):
        self.grid = grid
        self.kernel = kernel
        self.history = history
        self.eps_coarsen = eps_coarsen
        self.coarsen_every = coarsen_every
        self.s_span = kernel.default_s_max if s_span is None else s_span
        self._times = np.empty(64)
        self._grads = np.empty((64, grid.N + 1))
        self._count = 0
        self._since_coarsen = 0
        self._hist_grad = grid.grad(history.profile)
        self._cache = {}

    def __len__(self):
        return self._count

    @property
    def mass(self) -> float:
        return self.kernel.mass

    @property
    def times(self) -> np.ndarray:
        return self._times[: self._count]

    @property
    def grads(self) -> np.ndarray:
        return self._grads[: self._count]

    @property
    def t(self) -> float:
        if self._count == 0:
            raise MissingHistoryError("history buffer is empty")
        return float(self._times[self._count - 1])

    @property
    def g(self) -> np.ndarray:
        if self._count == 0:
            raise MissingHistoryError("history buffer is empty")
        return self._grads[self._count - 1]

    def push(self, t: float, g) -> None:
        if self._count and t <= self._times[self._count - 1]:
            raise OrderingError(f"timestamp {t} is not newer than {self._times[self._count - 1]}")
        if self._count == self._times.size:
            self._times = np.concatenate([self._times, np.empty(self._times.size)])
            self._grads = np.concatenate([self._grads, np.empty_like(self._grads)])
        self._times[self._count] = t
        self._grads[self._count] = g
        self._count += 1
        if self.eps_coarsen is not None:
            self._since_coarsen += 1
            if self._since_coarsen >= self.coarsen_every:
                self.coarsen()

    def push_state(self, t: float, y) -> None:
        self.push(t, self.grid.grad(y))

    def _check_time(self, t):
        if self._count == 0:
            raise MissingHistoryError("history buffer is empty")
        newest = self.t
        if t is None:
            return self._count
        if t > newest * (1 + TIME_RTOL) + TIME_RTOL:
            raise MissingHistoryError(f"history only covers [0, {newest}], requested t={t}")
        idx = int(np.searchsorted(self.times, t * (1 + TIME_RTOL) + TIME_RTOL, side="right"))
        if not math.isclose(self._times[idx - 1], t, rel_tol=1e-9, abs_tol=1e-12):
            raise MissingHistoryError(f"no record at t={t}")
        return idx

    def _record_weights(self, count, deriv=False):
        """Weights of ``int_0^t w(s) g(t - s) ds`` for ``g`` linear between records.

        ``w`` (``mu`` or ``mu'``) is integrated against each hat function by
        Gauss-Legendre on every record interval, so a frozen trajectory picks up
        exactly ``int_0^t w``.
        """
        times = self._times[:count]
        t = times[-1]
        if times[0] > TIME_RTOL:
            raise MissingHistoryError(f"records start at {times[0]}, not at 0")
        if count == 1:
            return np.zeros(1), t
        a, b = times[:-1], times[1:]
        half = 0.5 * (b - a)
        tau = (a + half)[:, None] + half[:, None] * _GL_NODES[None, :]
        w = np.asarray(self.kernel.dmu(t - tau) if deriv else self.kernel.mu(t - tau), dtype=float)
        w = w * (half[:, None] * _GL_WEIGHTS[None, :])
        lam = 0.5 * (1.0 + _GL_NODES)
        out = np.zeros(count)
        out[:-1] += w @ (1.0 - lam)
        out[1:] += w @ lam
        return out, t

    def _prescribed(self, t, deriv):
        key = (t, deriv)
        if key not in self._cache:
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = _prescribed_weights(self.kernel, self.history, t, deriv, self.s_span)
        return self._cache[key]

    def convolution(self, t: float | None = None) -> np.ndarray:
        """Edge field ``int_0^inf mu(s) y_x(t - s) ds``."""
        count = self._check_time(t)
        w, t = self._record_weights(count)
        _, a1, _ = self._prescribed(t, False)
        return w @ self._grads[:count] + a1 * self._hist_grad

    def _tail(self, t, deriv):
        count = self._check_time(t)
        w, t = self._record_weights(count, deriv)
        grads = self._grads[:count]
        current = grads[-1]
        diff_sq = self.grid.dx * np.sum((grads - current) ** 2, axis=1)
        a0, a1, a2 = self._prescribed(t, deriv)
        hg = self._hist_grad
        inner = self.grid.inner_edges
        prescribed = a0 * inner(current, current) - 2.0 * a1 * inner(current, hg) + a2 * inner(hg, hg)
        return float(w @ diff_sq) + prescribed

    def tail(self, t: float | None = None) -> float:
        """``int_Omega int_0^inf mu(s) |y_x(t) - y_x(t - s)|^2 ds dx`` (>= 0)."""
        return max(self._tail(t, False), 0.0)

    def prime_tail(self, t: float | None = None) -> float:
        """Same with ``mu'`` in place of ``mu`` (<= 0)."""
        return min(self._tail(t, True), 0.0)

    def coarsen(self) -> None:
        """Merge old record pairs whose combined mu-weight is below ``eps * mass``.

        Works from the oldest record forward; the record at ``t = 0`` and the
        newest record are never merged. Each merged record sits at the
        weighted mean time and carries the weighted mean gradient.
        """
        self._since_coarsen = 0
        if self.eps_coarsen is None or self._count < 4:
            return
        threshold = self.eps_coarsen * self.mass
        w, _ = self._record_weights(self._count)
        times = list(self._times[: self._count])
        grads = self._grads[: self._count]
        new_t, new_g = [times[0]], [grads[0]]
        i = 1
        last = self._count - 1
        merging = True
        while i < last:
            if merging and i + 1 < last and w[i] + w[i + 1] < threshold:
                wi, wj = w[i], w[i + 1]
                tot = wi + wj
                if tot > 0:
                    new_t.append((wi * times[i] + wj * times[i + 1]) / tot)
                    new_g.append((wi * grads[i] + wj * grads[i + 1]) / tot)
                else:
                    new_t.append(0.5 * (times[i] + times[i + 1]))
                    new_g.append(0.5 * (grads[i] + grads[i + 1]))
                i += 2
            else:
                merging = False
                new_t.append(times[i])
                new_g.append(grads[i])
                i += 1
        if i == last:
            new_t.append(times[last])
            new_g.append(grads[last])
        n = len(new_t)
        if n == self._count:
            return
        self._times[:n] = new_t
        self._grads[:n] = np.asarray(new_g)
        self._count = n


# --------------------------------------------------------------------------
# Modal (sum-of-exponentials) backend
# --------------------------------------------------------------------------


def product_weights(rates, dt):
    """Coefficients of the exact update for a piecewise-linear input.

    For ``m' = g(t) - r m`` with ``g`` linear on ``[t, t + dt]``::

        m(t + dt) = exp(-r dt) m(t) + c_prev g(t) + c_new g(t + dt)
    """
    rates = np.asarray(rates, dtype=float)
    z = rates * dt
    decay = np.exp(-z)
    small = z < 1e-3
    zs = np.where(small, 1.0, z)
    # int_0^dt e^{-r(dt-u)} du and int_0^dt e^{-r(dt-u)} u/dt du
    full = np.where(small, dt * (1 - z / 2 + z**2 / 6 - z**3 / 24), -np.expm1(-zs) / np.where(small, 1.0, rates))
    ramp = np.where(small, dt * (0.5 - z / 6 + z**2 / 24 - z**3 / 120),
                    (zs + np.expm1(-zs)) / (np.where(small, 1.0, rates) * zs))
    return decay, full - ramp, ramp


class ModalMemory:
    """Recursive memory state for ``mu(s) = sum_j w_j exp(-r_j s)``.

    ``m[j]`` holds ``int w_j exp(-r_j s) y_x(t - s) ds`` per edge and ``Q[j]``
    holds ``int w_j exp(-r_j s) |y_x(t - s)|^2 ds`` (spatially integrated).
    """

    def __init__(self, grid: Grid, kernel: MemoryKernel, history: PrescribedHistory, modes=None):
        modes = kernel.modes() if modes is None else modes
        if modes is None:
            raise ValueError(f"{kernel.family} kernel has no modal representation")
        self.grid = grid
        self.kernel = kernel
        self.history = history
        self.weights = np.ascontiguousarray(modes[0], dtype=float)
        self.rates = np.ascontiguousarray(modes[1], dtype=float)
        self.mass = float(np.sum(self.weights / self.rates))
        hist_grad = grid.grad(history.profile)
        lap = history.laplace(self.rates)
        if not np.all(np.isfinite(lap)):
            raise DomainError("memory convolution of the prescribed past diverges for this kernel")
        self.m = np.ascontiguousarray(np.outer(self.weights * lap, hist_grad))
        lap_sq = history.laplace_sq(self.rates)
        self.track_q = bool(np.all(np.isfinite(lap_sq)))
        gsq = grid.inner_edges(hist_grad, hist_grad)
        self.Q = np.ascontiguousarray(self.weights * lap_sq * gsq if self.track_q
                                      else np.full(self.rates.size, np.nan))
        self.g = hist_grad * float(history.theta(0.0))
        self.gsq = grid.inner_edges(self.g, self.g)
        self.t = 0.0
        self._coef = None

    def coefficients(self, dt):
        if self._coef is None or self._coef[0] != dt:
            decay, c_prev, c_new = product_weights(self.rates, dt)
            self._coef = (dt, np.ascontiguousarray(decay), np.ascontiguousarray(self.weights * c_prev),
                          np.ascontiguousarray(self.weights * c_new))
        return self._coef[1:]

    def push(self, t: float, g) -> None:
        """Advance the recursion to time ``t`` with the new edge gradient ``g``."""
        dt = t - self.t
        if dt <= 0:
            raise OrderingError(f"timestamp {t} is not newer than {self.t}")
        decay, c_prev, c_new = self.coefficients(dt)
        g = np.asarray(g, dtype=float)
        gsq = self.grid.inner_edges(g, g)
        self.m *= decay[:, None]
        self.m += c_prev[:, None] * self.g + c_new[:, None] * g
        if self.track_q:
            self.Q = decay * self.Q + c_prev * self.gsq + c_new * gsq
        self.g = g.copy()
        self.gsq = gsq
        self.t = t

    def push_state(self, t: float, y) -> None:
        self.push(t, self.grid.grad(y))

    def convolution(self, t: float | None = None) -> np.ndarray:
        self._check(t)
        return self.m.sum(axis=0)

    def _check(self, t):
        if t is not None and not math.isclose(t, self.t, rel_tol=1e-9, abs_tol=1e-12):
            raise MissingHistoryError(f"modal memory is at t={self.t}, requested t={t}")

    def _mode_tails(self):
        dx = self.grid.dx
        cross = dx * (self.m @ self.g)
        return (self.weights / self.rates) * self.gsq - 2.0 * cross + self.Q

    def tail(self, t: float | None = None) -> float:
        self._check(t)
        if not self.track_q:
            return math.nan
        return max(float(np.sum(self._mode_tails())), 0.0)

    def prime_tail(self, t: float | None = None) -> float:
        self._check(t)
        if not self.track_q:
            return math.nan
        return min(-float(np.sum(self.rates * self._mode_tails())), 0.0)


# --------------------------------------------------------------------------
# Module-level operations
# --------------------------------------------------------------------------


def _check_kernel(buf, k):
    if k is not None and k != buf.kernel:
        raise ValueError("kernel does not match the one the memory was built with")


def memory_convolution(buf, k: MemoryKernel | None = None, t: float | None = None) -> np.ndarray:
    """Nodal field ``int_0^inf mu(s) y_xx(t - s) ds`` in divergence form."""
    _check_kernel(buf, k)
    return buf.grid.div(buf.convolution(t))


def mu_tail_norm(buf, k: MemoryKernel | None = None, t: float | None = None) -> float:
    _check_kernel(buf, k)
    return buf.tail(t)


def mu_prime_tail_norm(buf, k: MemoryKernel | None = None, t: float | None = None) -> float:
    _check_kernel(buf, k)
    return buf.prime_tail(t)


def push_state(buf, t: float, y) -> None:
    buf.push_state(t, y)


def coarsen(buf) -> None:
    if isinstance(buf, HistoryBuffer):
        buf.coarsen()


def make_memory(grid: Grid, kernel: MemoryKernel, history: PrescribedHistory, backend: str = "auto",
                **kwargs):
    """``modal`` when the kernel has a sum-of-exponentials form, else ``buffer``."""
    if backend == "auto":
        backend = "modal" if kernel.modes() is not None else "buffer"
    if backend == "modal":
        return ModalMemory(grid, kernel, history)
    if backend == "buffer":
        buf = HistoryBuffer(grid, kernel, history, **kwargs)
        buf.push(0.0, grid.grad(history.profile) * float(history.theta(0.0)))
        return buf
    raise ValueError(f"unknown memory backend {backend!r}")
