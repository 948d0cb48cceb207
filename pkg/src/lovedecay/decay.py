"""Rate function ``H1``, its inverse, and fitting of the energy decay bound.

``H1(tau) = int_tau^1 ds / (s H'(kappa s))`` and the bound has the shape
``E(t) <= kappa1 H1^{-1}(kappa t + kappa0)``. Linear and power moduli have
closed forms; any other modulus (or ``method="quad"``) goes through adaptive
quadrature in ``u = ln s`` and bracketed root finding in ``ln tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from .errors import DomainError
from .kernel import ConvexModulus, LinearModulus, PowerModulus

H1_ABS_TOL = 1e-10
TIE_RTOL = 1e-2


def _closed(h: ConvexModulus, method: str) -> bool:
    if method not in ("auto", "closed", "quad"):
        raise ValueError(f"unknown method {method!r}")
    has = isinstance(h, (LinearModulus, PowerModulus))
    if method == "closed" and not has:
        raise ValueError(f"no closed form for {h.family} moduli")
    return has and method != "quad"


def _power_scale(h: PowerModulus, kappa: float) -> float:
    # H'(kappa s) = scale * s^(r-1)
    return h.c * h.r * kappa ** (h.r - 1.0)


def _h1_quad(tau: float, h: ConvexModulus, kappa: float) -> float:
    if tau == 1.0:
        return 0.0
    lo = math.log(tau)
    f = lambda u: 1.0 / float(h.dH(kappa * math.exp(u)))
    # unit-length pieces in u keep each panel's integrand within a bounded dynamic range
    edges = np.linspace(lo, 0.0, max(2, int(math.ceil(-lo)) + 1))
    total = math.fsum(integrate.quad(f, a, b, epsabs=H1_ABS_TOL * 1e-3, epsrel=1e-13, limit=200)[0]
                      for a, b in zip(edges[:-1], edges[1:]))
    return total


def h1(tau, h: ConvexModulus, kappa: float = 1.0, method: str = "auto"):
    """``H1(tau)`` for ``tau`` in ``(0, 1]`` (scalar or array)."""
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr <= 0) or np.any(tau_arr > 1):
        raise DomainError("H1 is defined for tau in (0, 1]")
    if _closed(h, method):
        if isinstance(h, LinearModulus):
            out = -np.log(tau_arr) / h.c
        else:
            r = h.r
            out = (tau_arr ** (1.0 - r) - 1.0) / ((r - 1.0) * _power_scale(h, kappa))
    else:
        out = np.vectorize(lambda x: _h1_quad(float(x), h, kappa), otypes=[float])(tau_arr)
    return float(out) if out.ndim == 0 else out


def log_h1_inverse(z, h: ConvexModulus, kappa: float = 1.0, method: str = "auto"):
    """``ln H1^{-1}(z)``; stays finite where ``H1^{-1}`` itself underflows."""
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise DomainError("H1^{-1} is defined for z >= 0")
    if _closed(h, method):
        if isinstance(h, LinearModulus):
            out = -h.c * z_arr
        else:
            r = h.r
            out = -np.log1p((r - 1.0) * _power_scale(h, kappa) * z_arr) / (r - 1.0)
    else:
        out = np.vectorize(lambda x: _log_inverse_root(float(x), h, kappa), otypes=[float])(z_arr)
    return float(out) if out.ndim == 0 else out


def h1_inverse(z, h: ConvexModulus, kappa: float = 1.0, method: str = "auto"):
    """``H1^{-1}(z)`` in ``(0, 1]``; ``z = 0`` maps to 1."""
    out = np.exp(log_h1_inverse(z, h, kappa, method))
    return float(out) if np.ndim(out) == 0 else out


def _log_inverse_root(z: float, h: ConvexModulus, kappa: float) -> float:
    if z == 0:
        return 0.0
    g = lambda u: _h1_quad(math.exp(u), h, kappa) - z
    lo = -1.0
    while g(lo) < 0:
        lo *= 2.0
        if lo < -1400:
            raise DomainError(f"H1 does not reach {z}")
    return optimize.brentq(g, lo, 0.0, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------


@dataclass
class DecayFit:
    kappa: float
    kappa0: float
    kappa1: float
    max_violation: float
    bound_curve: np.ndarray
    terminal_bound: float
    initial_bound: float
    decaying: bool
    empirical: dict = field(default_factory=dict)
    degenerate: bool = False

    @property
    def holds(self) -> bool:
        return self.max_violation <= 0

    @property
    def decay_factor(self) -> float:
        return self.initial_bound / self.terminal_bound if self.terminal_bound > 0 else math.inf

    @property
    def empirical_rate(self) -> tuple:
        """The better of the two regressions by ``r^2``."""
        exp, alg = self.empirical.get("exponential"), self.empirical.get("algebraic")
        if not exp or not alg:
            return ()
        if exp["r2"] >= alg["r2"]:
            return ("ExponentialFit", exp["rate"], exp["r2"])
        return ("AlgebraicFit", alg["exponent"], alg["r2"])

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa, "kappa0": self.kappa0, "kappa1": self.kappa1,
            "max_violation": self.max_violation, "terminal_bound": self.terminal_bound,
            "initial_bound": self.initial_bound, "decaying": self.decaying,
            "holds": self.holds, "degenerate": self.degenerate, "empirical": self.empirical,
            "empirical_rate": list(self.empirical_rate),
        }


def empirical_rates(t, E, fraction: float = 0.5) -> dict:
    """Least-squares slopes of ``ln E`` on ``t`` and on ``ln(1 + t)`` over the trailing part."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    keep = (t >= t[0] + (1.0 - fraction) * (t[-1] - t[0])) & (E > 0)
    if np.count_nonzero(keep) < 3:
        return {}
    lt, lE = t[keep], np.log(E[keep])
    ex = stats.linregress(lt, lE)
    al = stats.linregress(np.log1p(lt), lE)
    return {
        "exponential": {"rate": -float(ex.slope), "r2": float(ex.rvalue**2)},
        "algebraic": {"exponent": -float(al.slope), "r2": float(al.rvalue**2)},
    }


def _bound_from(t, logE, h, kappa, kappa0):
    log_inv = log_h1_inverse(kappa * t + kappa0, h, kappa)
    log_k1 = float(np.max(logE - log_inv))
    # one part in 1e12 of slack keeps E_n <= bound_n robust to rounding
    log_k1 += 1e-12
    return log_k1, log_inv


def fit_bound(trace_or_t, h: ConvexModulus, E=None, kappas=None, kappa0s=None,
              tie_rtol: float = TIE_RTOL) -> DecayFit:
    """Fit ``kappa1 H1^{-1}(kappa t + kappa0)`` over a grid of ``(kappa, kappa0)``.

    ``kappa1`` is the smallest admissible value for each pair. Among pairs whose
    terminal bound is within ``tie_rtol`` of the best, the one with the smallest
    initial bound ``kappa1 H1^{-1}(kappa0)`` is kept; the terminal bound alone
    keeps improving as ``kappa`` grows while the bound degenerates into a spike.
    """
    if E is None:
        t = trace_or_t.column("t")
        E = trace_or_t.column("E")
    else:
        t = np.asarray(trace_or_t, dtype=float)
        E = np.asarray(E, dtype=float)
    if t.size == 0:
        raise ValueError("empty trace")
    if np.all(E == 0):
        zeros = np.zeros_like(t)
        return DecayFit(math.nan, math.nan, 0.0, 0.0, zeros, 0.0, 0.0, True, degenerate=True)
    if E[0] <= 0:
        raise ValueError("fit needs E(0) > 0")
    kappas = np.logspace(-3, 2, 51) if kappas is None else np.asarray(kappas, dtype=float)
    kappa0s = np.linspace(0.0, 10.0, 41) if kappa0s is None else np.asarray(kappa0s, dtype=float)
    with np.errstate(divide="ignore"):
        logE = np.log(np.maximum(E, 0.0))
    tt = t - t[0]
    cells = []
    for kappa in kappas:
        for kappa0 in kappa0s:
            log_k1, log_inv = _bound_from(tt, logE, h, kappa, kappa0)
            log_init = log_k1 + float(log_h1_inverse(kappa0, h, kappa))
            cells.append((log_k1 + log_inv[-1], log_init, kappa, kappa0))
    best_terminal = min(c[0] for c in cells)
    ties = [c for c in cells if c[0] <= best_terminal + math.log1p(tie_rtol)]
    log_terminal, log_init, kappa, kappa0 = min(ties, key=lambda c: c[1])
    log_k1, log_inv = _bound_from(tt, logE, h, kappa, kappa0)
    curve = np.exp(log_k1 + log_inv)
    violation = float(np.max(E - curve))
    terminal, initial = math.exp(log_terminal), math.exp(log_init)
    return DecayFit(
        kappa=float(kappa), kappa0=float(kappa0), kappa1=math.exp(log_k1),
        max_violation=violation, bound_curve=curve, terminal_bound=terminal,
        initial_bound=initial, decaying=terminal <= 0.5 * initial,
        empirical=empirical_rates(t, E))
