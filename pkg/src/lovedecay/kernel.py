"""Memory kernels, convex moduli and their numerical certification.

A memory kernel is the relaxation function ``mu(s)`` weighting the past in the
hereditary term. A convex modulus ``H`` quantifies how fast the kernel decays
and drives the general decay rate. Both are immutable value objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NonIntegrableKernelError, UnsupportedConjugateError

MONOTONE_SLACK = 1e-12
SUP_GRID_POINTS = 512
SUP_GRID_START = 1e-6


# --------------------------------------------------------------------------
# Memory kernels
# --------------------------------------------------------------------------


class MemoryKernel:
    """Base class for relaxation kernels ``mu: [0, inf) -> [0, inf)``."""

    family: str = "abstract"

    def mu(self, s):
        raise NotImplementedError

    def dmu(self, s):
        raise NotImplementedError

    def tail_mass(self, s: float) -> float:
        """Return the integral of ``mu`` over ``[s, inf)``."""
        raise NotImplementedError

    def tail_model(self) -> tuple[str, float]:
        """Asymptotic decay class, ``("exponential", rate)`` or ``("polynomial", exponent)``."""
        raise NotImplementedError

    @property
    def default_s_max(self) -> float:
        return 50.0

    @property
    def mass(self) -> float:
        return self.tail_mass(0.0)

    @property
    def ell(self) -> float:
        return 1.0 - self.mass

    @property
    def mu0(self) -> float:
        return float(self.mu(0.0))

    def modes(self):
        """Sum-of-exponentials representation ``mu(s) ~ sum_j w_j exp(-r_j s)``.

        Returns ``(weights, rates)`` or ``None`` when the family has none.
        """
        return None

    def to_spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialKernel(MemoryKernel):
    """``mu(s) = a exp(-b s)``."""

    a: float
    b: float
    family: str = field(default="exponential", init=False)

    def __post_init__(self):
        if self.b <= 0 or self.a < 0:
            raise DomainError(f"exponential kernel needs a >= 0, b > 0 (got a={self.a}, b={self.b})")

    def mu(self, s):
        return self.a * np.exp(-self.b * np.asarray(s, dtype=float))

    def dmu(self, s):
        return -self.b * self.mu(s)

    def tail_mass(self, s: float) -> float:
        return self.a / self.b * math.exp(-self.b * s)

    def tail_model(self):
        return ("exponential", self.b)

    def modes(self):
        return np.array([self.a]), np.array([self.b])

    def to_spec(self):
        return {"family": "exponential", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class PolynomialKernel(MemoryKernel):
    """``mu(s) = a (1 + s)^(-q)``; integrable only for ``q > 1``."""

    a: float
    q: float
    family: str = field(default="polynomial", init=False)

    def __post_init__(self):
        if self.a < 0 or self.q <= 0:
            raise DomainError(f"polynomial kernel needs a >= 0, q > 0 (got a={self.a}, q={self.q})")

    def mu(self, s):
        return self.a * (1.0 + np.asarray(s, dtype=float)) ** (-self.q)

    def dmu(self, s):
        return -self.q * self.a * (1.0 + np.asarray(s, dtype=float)) ** (-self.q - 1.0)

    def tail_mass(self, s: float) -> float:
        if self.q <= 1.0:
            raise NonIntegrableKernelError(f"polynomial kernel with q={self.q} <= 1 has infinite mass")
        return self.a * (1.0 + s) ** (1.0 - self.q) / (self.q - 1.0)

    def tail_model(self):
        return ("polynomial", self.q)

    @property
    def default_s_max(self) -> float:
        return 1e3

    def modes(self, rel_tol: float = 1e-12, step: float = 0.25):
        # (1+s)^-q = Gamma(q)^-1 * int exp(q u - e^u (1+s)) du, trapezoid in u.
        if self.q <= 1.0:
            raise NonIntegrableKernelError(f"polynomial kernel with q={self.q} <= 1 has infinite mass")
        u_min = max(math.log(rel_tol * special.gamma(self.q)) / (self.q - 1.0), -80.0)
        u_max = math.log(self.q + 40.0)
        u = np.arange(u_min, u_max + step, step)
        rates = np.exp(u)
        weights = self.a * step * np.exp(self.q * u - rates) / special.gamma(self.q)
        return weights, rates

    def to_spec(self):
        return {"family": "polynomial", "a": self.a, "q": self.q}


@dataclass(frozen=True)
class TabulatedKernel(MemoryKernel):
    """Piecewise-linear kernel through samples ``(s_i, mu_i)`` with an analytic tail.

    ``tail`` is ``("exponential", rate)`` or ``("polynomial", exponent)``; beyond
    the last sample ``mu`` continues as ``mu_last * exp(-rate (s - s_last))`` or
    ``mu_last * ((1 + s) / (1 + s_last))^(-exponent)``.
    """

    s: tuple
    values: tuple
    tail: tuple
    family: str = field(default="tabulated", init=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.size < 2 or s.size != v.size:
            raise DomainError("tabulated kernel needs matching sample arrays of length >= 2")
        if s[0] != 0.0 or np.any(np.diff(s) <= 0):
            raise DomainError("tabulated sample points must start at 0 and increase strictly")
        kind, value = self.tail
        if kind not in ("exponential", "polynomial"):
            raise DomainError(f"unknown tail kind {kind!r}")
        if kind == "exponential" and value <= 0:
            raise DomainError("exponential tail rate must be positive")
        if kind == "polynomial" and value <= 1:
            raise NonIntegrableKernelError(f"polynomial tail exponent {value} <= 1 is not integrable")
        object.__setattr__(self, "s", tuple(s.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))

    @property
    def _arrays(self):
        return np.asarray(self.s), np.asarray(self.values)

    def _tail_mu(self, s):
        s_arr, v = self._arrays
        kind, value = self.tail
        if kind == "exponential":
            return v[-1] * np.exp(-value * (s - s_arr[-1]))
        return v[-1] * ((1.0 + s) / (1.0 + s_arr[-1])) ** (-value)

    def _tail_dmu(self, s):
        s_arr, _ = self._arrays
        kind, value = self.tail
        if kind == "exponential":
            return -value * self._tail_mu(s)
        return -value * self._tail_mu(s) / (1.0 + s)

    def mu(self, s):
        s = np.asarray(s, dtype=float)
        s_arr, v = self._arrays
        inside = np.interp(s, s_arr, v)
        return np.where(s <= s_arr[-1], inside, self._tail_mu(np.maximum(s, s_arr[-1])))

    def dmu(self, s):
        s = np.asarray(s, dtype=float)
        s_arr, v = self._arrays
        slopes = np.diff(v) / np.diff(s_arr)
        idx = np.clip(np.searchsorted(s_arr, s, side="right") - 1, 0, slopes.size - 1)
        return np.where(s < s_arr[-1], slopes[idx], self._tail_dmu(np.maximum(s, s_arr[-1])))

    def tail_mass(self, s: float) -> float:
        s_arr, v = self._arrays
        kind, value = self.tail
        last = s_arr[-1]
        if kind == "exponential":
            beyond = v[-1] / value
        else:
            beyond = v[-1] * (1.0 + last) / (value - 1.0)
        if s >= last:
            if kind == "exponential":
                return float(self._tail_mu(s) / value)
            return float(self._tail_mu(s) * (1.0 + s) / (value - 1.0))
        # piecewise linear part from s to the last sample (trapezoid is exact)
        knots = np.concatenate([[s], s_arr[s_arr > s]])
        vals = np.interp(knots, s_arr, v)
        return float(np.trapezoid(vals, knots) + beyond)

    def tail_model(self):
        return tuple(self.tail)

    @property
    def default_s_max(self) -> float:
        s_arr, _ = self._arrays
        kind, _ = self.tail
        return float(s_arr[-1]) + (50.0 if kind == "exponential" else 1e3)

    def to_spec(self):
        return {"family": "tabulated", "s": list(self.s), "mu": list(self.values),
                "tail": {"kind": self.tail[0], "value": self.tail[1]}}


def kernel_from_spec(spec: dict) -> MemoryKernel:
    """Build a kernel from a tagged record such as ``{"family": "exponential", "a": 0.5, "b": 1}``."""
    family = spec.get("family")
    if family == "exponential":
        return ExponentialKernel(float(spec["a"]), float(spec["b"]))
    if family == "polynomial":
        return PolynomialKernel(float(spec["a"]), float(spec["q"]))
    if family == "tabulated":
        tail = spec["tail"]
        return TabulatedKernel(tuple(spec["s"]), tuple(spec["mu"]), (tail["kind"], float(tail["value"])))
    raise KeyError(f"unknown kernel family {family!r}")


def kernel_mass(k: MemoryKernel) -> float:
    """Integral of ``mu`` over ``[0, inf)``."""
    return k.mass


# --------------------------------------------------------------------------
# Convex moduli
# --------------------------------------------------------------------------


class ConvexModulus:
    family: str = "abstract"
    relaxed: bool = False

    def H(self, t):
        raise NotImplementedError

    def dH(self, t):
        raise NotImplementedError

    def H_inv(self, x):
        raise NotImplementedError

    def dH_inv(self, s):
        raise UnsupportedConjugateError(f"{self.family} modulus has constant H'; (H')^-1 is undefined")

    @property
    def exponent(self) -> float:
        raise NotImplementedError


def _check_nonnegative(x, what):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError(f"{what} evaluated at negative argument {arr.min()!r}")
    return arr


@dataclass(frozen=True)
class LinearModulus(ConvexModulus):
    """``H(t) = c t``. Admitted as a relaxation: ``H'(0) = c > 0``."""

    c: float = 1.0
    family: str = field(default="linear", init=False)
    relaxed: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError("linear modulus needs c > 0")

    def H(self, t):
        return self.c * _check_nonnegative(t, "H")

    def dH(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.c)

    def H_inv(self, x):
        return _check_nonnegative(x, "H^-1") / self.c

    @property
    def exponent(self) -> float:
        return 1.0

    def to_spec(self):
        return {"family": "linear", "c": self.c}


@dataclass(frozen=True)
class PowerModulus(ConvexModulus):
    """``H(t) = c t^r`` with ``r > 1``."""

    r: float
    c: float = 1.0
    family: str = field(default="power", init=False)

    def __post_init__(self):
        if self.r <= 1 or self.c <= 0:
            raise DomainError(f"power modulus needs r > 1, c > 0 (got r={self.r}, c={self.c})")

    def H(self, t):
        return self.c * _check_nonnegative(t, "H") ** self.r

    def dH(self, t):
        return self.c * self.r * _check_nonnegative(t, "H'") ** (self.r - 1.0)

    def H_inv(self, x):
        return (_check_nonnegative(x, "H^-1") / self.c) ** (1.0 / self.r)

    def dH_inv(self, s):
        return (_check_nonnegative(s, "(H')^-1") / (self.c * self.r)) ** (1.0 / (self.r - 1.0))

    @property
    def exponent(self) -> float:
        return self.r

    def to_spec(self):
        return {"family": "power", "r": self.r, "c": self.c}


def modulus_from_spec(spec: dict) -> ConvexModulus:
    family = spec.get("family")
    if family == "linear":
        return LinearModulus(float(spec.get("c", 1.0)))
    if family == "power":
        return PowerModulus(float(spec["r"]), float(spec.get("c", 1.0)))
    raise KeyError(f"unknown modulus family {family!r}")


def young_conjugate(h: ConvexModulus, s):
    """``H*(s) = s (H')^-1(s) - H((H')^-1(s))``."""
    if not isinstance(h, PowerModulus):
        raise UnsupportedConjugateError(f"{h.family} modulus has no invertible derivative")
    s = _check_nonnegative(s, "H*")
    u = h.dH_inv(s)
    out = s * u - h.H(u)
    return float(out) if out.ndim == 0 else out


def young_inequality_check(h: ConvexModulus, samples: Iterable[Sequence[float]]) -> bool:
    """True iff ``A B <= H*(A) + H(B)`` (up to 1e-12) for every sampled pair."""
    for A, B in samples:
        if B < 0:
            raise DomainError(f"Young inequality needs B >= 0 (got {B})")
        if A * B > young_conjugate(h, A) + float(h.H(B)) + 1e-12:
            return False
    return True


# --------------------------------------------------------------------------
# Certification
# --------------------------------------------------------------------------


@dataclass
class CertReport:
    """Per-clause outcome of a certification, plus the numbers behind it."""

    name: str
    clauses: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    @property
    def failed_clauses(self) -> list:
        return [k for k, ok in self.clauses.items() if not ok]

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "clauses": dict(self.clauses),
                "failed": self.failed_clauses, "values": _jsonable(self.values),
                "flags": list(self.flags)}


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not math.isfinite(v):
            v = "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        out[k] = v
    return out


def sample_grid(s_max: float, count: int) -> np.ndarray:
    """``0`` followed by a geometric grid on ``[1e-6, s_max]``."""
    return np.concatenate([[0.0], np.geomspace(SUP_GRID_START, s_max, count - 1)])


def certify_hyp1(k: MemoryKernel, sample_count: int = 256, s_max: float | None = None) -> CertReport:
    """Check nonnegativity, monotonicity, ``l > 0`` and ``mu(0) > 0`` for ``k``."""
    if sample_count < 16:
        raise DomainError("certify_hyp1 needs sample_count >= 16")
    s_max = k.default_s_max if s_max is None else s_max
    s = sample_grid(s_max, sample_count)
    mu = np.asarray(k.mu(s), dtype=float)
    rep = CertReport("hyp1")
    rep.clauses["nonnegative"] = bool(np.all(mu >= 0))
    rep.clauses["monotone"] = bool(np.all(np.diff(mu) <= MONOTONE_SLACK))
    try:
        mass = k.mass
        rep.clauses["integrable"] = True
    except NonIntegrableKernelError:
        mass = math.inf
        rep.clauses["integrable"] = False
    ell = 1.0 - mass
    rep.clauses["ell_positive"] = bool(ell > 0)
    rep.clauses["mu0_positive"] = bool(k.mu0 > 0)
    rep.values.update(mass=mass, ell=ell, mu0=k.mu0, s_max=s_max, samples=sample_count)
    return rep


def _ratio(k: MemoryKernel, h: ConvexModulus, s):
    """``mu(s) / H^-1(-mu'(s))``; raises DomainError where ``mu' > 0``."""
    mu = np.asarray(k.mu(s), dtype=float)
    slope = -np.asarray(k.dmu(s), dtype=float)
    if np.any(slope < 0):
        raise DomainError("mu' > 0 somewhere: H^-1 evaluated at a negative argument")
    denom = np.asarray(h.H_inv(slope), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(mu == 0, 0.0, mu / denom)
    return out


def _ratio_tail(k: MemoryKernel, h: ConvexModulus, s_max: float):
    """Analytic bound on the ratio integral over ``[s_max, inf)`` and its decay exponent."""
    kind, value = k.tail_model()
    r = h.exponent
    at = float(_ratio(k, h, np.array([s_max]))[0])
    if kind == "exponential":
        rate = value * (1.0 - 1.0 / r)
        if rate <= 0:
            return (math.inf if at > 0 else 0.0), {"tail_kind": kind, "ratio_decay_rate": rate}
        return at / rate, {"tail_kind": kind, "ratio_decay_rate": rate}
    expo = -value + (value + 1.0) / r
    info = {"tail_kind": kind, "ratio_exponent": expo}
    if expo >= -1.0:
        return (math.inf if at > 0 else 0.0), info
    return at * (1.0 + s_max) / (-expo - 1.0), info


def certify_condition_H(k: MemoryKernel, h: ConvexModulus, s_max: float | None = None,
                        tol: float = 1e-10) -> CertReport:
    """Estimate ``int mu/H^-1(-mu')`` and ``sup mu/H^-1(-mu')``; pass iff both are finite.

    The integral is adaptive quadrature on ``[0, s_max]`` plus an analytic tail
    derived from the kernel's declared asymptotics; the supremum is taken over
    a 512-point geometric grid on ``[1e-6, s_max]`` and then over the tail.
    """
    s_max = k.default_s_max if s_max is None else s_max
    grid = np.geomspace(SUP_GRID_START, s_max, SUP_GRID_POINTS)
    ratios = _ratio(k, h, grid)
    sup_grid = float(np.max(ratios))

    kind, value = k.tail_model()
    tail_integral, info = _ratio_tail(k, h, s_max)
    # a ratio growing in the tail makes the supremum infinite
    growing = (kind == "polynomial" and info.get("ratio_exponent", -1.0) > 0) or \
              (kind == "exponential" and info.get("ratio_decay_rate", 1.0) < 0)
    sup = math.inf if growing else sup_grid

    head, err = integrate.quad(lambda s: float(_ratio(k, h, np.array([s]))[0]), 0.0, s_max,
                               epsabs=tol, epsrel=1e-10, limit=400)
    integral = head + tail_integral

    rep = CertReport("condition_H")
    rep.clauses["integral_finite"] = bool(math.isfinite(integral))
    rep.clauses["sup_finite"] = bool(math.isfinite(sup))
    rep.values.update(kappa2_integral=integral, kappa1_sup=sup, integral_head=head,
                      integral_tail=tail_integral, quad_error=err, s_max=s_max,
                      ratio_at_0=float(_ratio(k, h, np.array([0.0]))[0]),
                      ratio_at_s_max=float(ratios[-1]), **info)
    if h.relaxed:
        rep.flags.append("relaxed-modulus")
    if not rep.passed:
        rep.flags.append("informational: condition (H) does not block simulation")
    return rep
