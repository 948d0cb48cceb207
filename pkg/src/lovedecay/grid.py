"""Uniform 1D Dirichlet grid on ``(0, L)`` and its difference operators.

Nodal fields live on the ``N`` interior nodes ``x_i = i dx`` (``i = 1..N``);
boundary values are pinned to zero. Gradients live on the ``N + 1`` cell
edges so that summation by parts is exact::

    <-D2 u, u> = |grad u|^2        (both with dx weights)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class Grid:
    L: float
    N: int

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError(f"domain length must be positive, got {self.L}")
        if self.N < 3:
            raise ValueError(f"need at least 3 interior nodes, got {self.N}")

    @property
    def dx(self) -> float:
        return self.L / (self.N + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(1, self.N + 1)

    @cached_property
    def x_edges(self) -> np.ndarray:
        return self.dx * (np.arange(self.N + 1) + 0.5)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.N)

    def sine_mode(self, k: int = 1, amplitude: float = 1.0) -> np.ndarray:
        return amplitude * np.sin(k * math.pi * self.x / self.L)

    # -- operators --------------------------------------------------------

    def grad(self, u) -> np.ndarray:
        """Forward difference onto the ``N + 1`` edges, zero ghosts."""
        u = np.asarray(u, dtype=float)
        out = np.empty(self.N + 1)
        out[0] = u[0]
        out[1:-1] = np.diff(u)
        out[-1] = -u[-1]
        return out / self.dx

    def div(self, h) -> np.ndarray:
        """Edge field to nodes: ``(h_{i+1/2} - h_{i-1/2}) / dx``; ``div(grad u) = D2 u``."""
        return np.diff(np.asarray(h, dtype=float)) / self.dx

    def d2(self, u) -> np.ndarray:
        return self.div(self.grad(u))

    def d1(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        padded = np.concatenate(([0.0], u, [0.0]))
        return (padded[2:] - padded[:-2]) / (2.0 * self.dx)

    def integrate_edges(self, h) -> np.ndarray:
        """Recover nodal values from an edge gradient (``y(0) = 0``)."""
        return self.dx * np.cumsum(np.asarray(h, dtype=float))[:-1]

    # -- quadrature -------------------------------------------------------

    def inner(self, u, w) -> float:
        """Trapezoid inner product of nodal fields (boundary values are zero)."""
        return self.dx * float(np.dot(u, w))

    def inner_edges(self, h, k) -> float:
        """Midpoint inner product of edge fields."""
        return self.dx * float(np.dot(h, k))

    def lp_norm(self, u, p: float) -> float:
        """``int_0^L |u|^p dx`` by the trapezoid rule (not its p-th root)."""
        if p < 1:
            raise ValueError("p must be >= 1")
        return self.dx * float(np.sum(np.abs(u) ** p))

    def lp_norm_edges(self, h, p: float) -> float:
        return self.dx * float(np.sum(np.abs(h) ** p))

    def poincare_constant(self) -> float:
        return poincare_constant(self)

    @cached_property
    def _operators(self):
        return {}

    def shifted_operator(self, alpha: float = 0.0):
        ops = self._operators
        if alpha not in ops:
            ops[alpha] = _kernels.make_operator(self.N, self.dx, 1.0 + alpha)
        return ops[alpha]


def d2_apply(grid: Grid, u) -> np.ndarray:
    """Second difference ``(u[i-1] - 2 u[i] + u[i+1]) / dx^2`` with zero ghosts."""
    return grid.d2(u)


def d1_apply(grid: Grid, u) -> np.ndarray:
    """Centered difference ``(u[i+1] - u[i-1]) / (2 dx)`` with zero ghosts."""
    return grid.d1(u)


def solve_shifted(grid: Grid, rhs, alpha: float = 0.0) -> np.ndarray:
    """Solve ``(I - (1 + alpha) D2) w = rhs`` by tridiagonal elimination."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return np.asarray(_kernels.solve(grid.shifted_operator(alpha), np.asarray(rhs, dtype=float)))


def lp_norm(grid: Grid, u, p: float) -> float:
    return grid.lp_norm(u, p)


def poincare_constant(grid: Grid) -> float:
    """Best constant ``C`` in ``|y|_2 <= C |y_x|_2`` on ``H_0^1(0, L)``, i.e. ``L / pi``."""
    return grid.L / math.pi
