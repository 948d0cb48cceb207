"""Energy-type functionals evaluated along discrete trajectories.

States are duck-typed: anything with nodal ``y``, ``v``, ``a``, a time ``t``
and a ``grid``. Memory objects come from :mod:`lovedecay.history` and must be
current at the state's time.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import EquivalenceUndefinedError, PreconditionError, UndefinedScalingError

COLUMNS = ("t", "E", "J", "I", "phi", "xi", "L", "mu_tail", "mu_prime_tail", "kin", "kin_grad",
           "lp_grad", "lp_val", "dE_dt", "bound_rhs")


@dataclass
class EnergySample:
    t: float
    E: float
    J: float
    I: float
    phi: float
    xi: float
    L: float
    mu_tail: float
    mu_prime_tail: float
    kin: float
    kin_grad: float
    lp_grad: float
    lp_val: float
    dE_dt: float = math.nan
    bound_rhs: float = math.nan

    def row(self) -> tuple:
        return tuple(getattr(self, name) for name in COLUMNS)

    def to_dict(self) -> dict:
        return asdict(self)


assert tuple(f.name for f in fields(EnergySample)) == COLUMNS


# --------------------------------------------------------------------------
# Pointwise functionals
# --------------------------------------------------------------------------


def _grid(state, mem=None):
    grid = getattr(state, "grid", None)
    if grid is None and mem is not None:
        grid = mem.grid
    if grid is None:
        raise ValueError("state carries no grid")
    return grid


def energy_components(state, mem, k, p: float | None) -> dict:
    """Every term of ``E``; ``p=None`` drops the power terms (unforced linear model)."""
    grid = _grid(state, mem)
    g = grid.grad(state.y)
    gv = grid.grad(state.v)
    comp = {
        "kin": 0.5 * grid.inner(state.v, state.v),
        "kin_grad": 0.5 * grid.inner_edges(gv, gv),
        "grad_sq": grid.inner_edges(g, g),
        "mu_tail": mem.tail(),
        "lp_grad": 0.0 if p is None else grid.lp_norm_edges(g, p),
        "lp_val": 0.0 if p is None else grid.lp_norm(state.y, p),
        "ell": k.ell,
    }
    return comp


def _j_from(comp, p):
    inv_p = 0.0 if p is None else 1.0 / p
    return (0.5 * comp["ell"] * comp["grad_sq"] + 0.5 * comp["mu_tail"]
            + inv_p * comp["lp_grad"] - inv_p * comp["lp_val"])


def _i_from(comp):
    return comp["ell"] * comp["grad_sq"] + comp["mu_tail"] + comp["lp_grad"] - comp["lp_val"]


def energy(state, mem, k, p: float | None):
    """Return ``(E, J, components)``.

    ``J = l/2 |y_x|^2 + tail/2 + |y_x|_p^p / p - |y|_p^p / p`` and
    ``E = |y'|^2 / 2 + |y'_x|^2 / 2 + J``.
    """
    comp = energy_components(state, mem, k, p)
    J = _j_from(comp, p)
    return comp["kin"] + comp["kin_grad"] + J, J, comp


def modified_energy_I(state, mem, k, p: float | None) -> float:
    """``I = l |y_x|^2 + tail + |y_x|_p^p - |y|_p^p``."""
    return _i_from(energy_components(state, mem, k, p))


def phi(state, grid=None) -> float:
    """``int y y' + |y_x|^2 / 2 + int y_x y'_x``."""
    grid = grid or _grid(state)
    g = grid.grad(state.y)
    gv = grid.grad(state.v)
    return grid.inner(state.y, state.v) + 0.5 * grid.inner_edges(g, g) + grid.inner_edges(g, gv)


def mu_diamond_edges(mem) -> np.ndarray:
    """Edge field ``int mu(s) [y_x(t) - y_x(t - s)] ds`` at the memory's current time."""
    return mem.mass * mem.g - mem.convolution()


def mu_diamond(mem) -> np.ndarray:
    """Nodal ``int mu(s) [y(t) - y(t - s)] ds`` (integrated from the edge version)."""
    return mem.grid.integrate_edges(mu_diamond_edges(mem))


def xi_integrands(grid, mem, v, a) -> tuple[float, float]:
    """``(int y'_x (mu<>y_x), int y''_x (mu<>y_x))`` at the current time."""
    md = mu_diamond_edges(mem)
    return grid.inner_edges(grid.grad(v), md), grid.inner_edges(grid.grad(a), md)


@dataclass
class XiAccumulator:
    """Running trapezoid integrals of the two time-integrated parts of ``xi``."""

    t: float = 0.0
    I1: float = 0.0
    I2: float = 0.0
    h1: float = math.nan
    h2: float = math.nan

    def start(self, t, h1, h2):
        self.t, self.h1, self.h2 = t, h1, h2
        self.I1 = self.I2 = 0.0

    def update(self, t, h1, h2):
        dt = t - self.t
        self.I1 += 0.5 * dt * (self.h1 + h1)
        self.I2 += 0.5 * dt * (self.h2 + h2)
        self.t, self.h1, self.h2 = t, h1, h2


def xi_instant(state, mem) -> float:
    """``-int y' (mu<>y) dx``."""
    grid = _grid(state, mem)
    return -grid.inner(state.v, mu_diamond(mem))


def xi_accumulate(state, mem, k, acc: XiAccumulator) -> float:
    """``xi(t) = -int y' (mu<>y) - int_0^t int y'_x (mu<>y_x) - int_0^t int y''_x (mu<>y_x)``.

    ``acc`` must already hold the integrals up to ``state.t``.
    """
    return xi_instant(state, mem) - acc.I1 - acc.I2


def lyapunov_L(E, phi_value, xi, eps1: float, eps2: float):
    if eps1 <= 0 or eps2 < 0:
        raise ValueError("need eps1 > 0 and eps2 >= 0")
    return eps1 * np.asarray(E) + np.asarray(phi_value) + eps2 * np.asarray(xi)


# --------------------------------------------------------------------------
# Trace-level checks
# --------------------------------------------------------------------------


def _col(trace, name):
    if hasattr(trace, "column"):
        return trace.column(name)
    return np.asarray([getattr(s, name) for s in trace], dtype=float)


def equivalence_fit(trace, eps1: float, eps2: float):
    """``(c1, c2) = (min L/E, max L/E)`` over samples with ``E > 0``."""
    E = _col(trace, "E")
    if E.size == 0:
        raise EquivalenceUndefinedError("empty trace")
    L = lyapunov_L(E, _col(trace, "phi"), _col(trace, "xi"), eps1, eps2)
    bad = (E <= 0) & (L != 0)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise EquivalenceUndefinedError(f"E={E[idx]} <= 0 with L={L[idx]} at sample {idx}")
    keep = E > 0
    if not np.any(keep):
        raise EquivalenceUndefinedError("energy vanishes on the whole trace")
    ratio = L[keep] / E[keep]
    return float(ratio.min()), float(ratio.max())


def fit_eps1(trace, eps2: float, target: float = 10.0) -> float:
    """Smallest ``eps1`` giving ``c1 > 0`` and ``c2 / c1 <= target``.

    ``L / E = eps1 + (phi + eps2 xi) / E`` so the spread shrinks as ``eps1``
    grows; the bound is solved for directly.
    """
    if target <= 1:
        raise ValueError("target ratio must exceed 1")
    E = _col(trace, "E")
    keep = E > 0
    r = (_col(trace, "phi")[keep] + eps2 * _col(trace, "xi")[keep]) / E[keep]
    rmin, rmax = float(r.min()), float(r.max())
    need = max((rmax - target * rmin) / (target - 1.0), -rmin)
    eps1 = max(need, 0.0)
    # nudge off the boundary so c1 > 0 and the ratio is strictly inside
    return eps1 * (1 + 1e-9) + 1e-12 if eps1 > 0 else 1.0


def dissipation_check(trace, forced: bool = False, dt: float | None = None,
                      dx: float | None = None) -> dict:
    """Discrete ``dE/dt`` per sample interval against ``-2 kin_grad + tail'/2``.

    The traced bound is averaged over the two endpoints of each interval. With
    ``dt`` and ``dx`` the step-level tolerance ``10 dt (dx^2 + dt)(1 + E0)`` is
    also evaluated.
    """
    if forced:
        return {"skipped": True, "reason": "forcing active"}
    t = _col(trace, "t")
    E = _col(trace, "E")
    if t.size < 2:
        return {"skipped": False, "intervals": 0, "max_increase": 0.0, "max_violation": 0.0,
                "passed": True}
    bound = -2.0 * _col(trace, "kin_grad") + 0.5 * _col(trace, "mu_prime_tail")
    dE = np.diff(E)
    rate = dE / np.diff(t)
    violation = rate - 0.5 * (bound[1:] + bound[:-1])
    report = {
        "skipped": False,
        "intervals": int(dE.size),
        "max_increase": float(np.max(dE)),
        "max_increase_index": int(np.argmax(dE)),
        "max_violation": float(np.nanmax(violation)) if np.any(np.isfinite(violation)) else math.nan,
        "E0": float(E[0]),
    }
    if dt is not None and dx is not None:
        tol = 10.0 * dt * (dx * dx + dt) * (1.0 + E[0])
        report["tol_E"] = tol
        report["passed"] = bool(report["max_increase"] <= tol)
    return report


# --------------------------------------------------------------------------
# Certificates
# --------------------------------------------------------------------------


def nehari_scale(state, mem, k, p: float):
    """Maximise ``j(nu) = J(nu y) = nu^2 Q + nu^p P`` over ``nu >= 0``.

    Returns ``(nu_star, j_max)``; ``(inf, inf)`` when ``P >= 0`` (no bound).
    The memory tail scales with ``nu^2`` because the whole past is scaled.
    """
    comp = energy_components(state, mem, k, p)
    if comp["grad_sq"] == 0 and comp["lp_val"] == 0:
        raise UndefinedScalingError("zero state has no Nehari scaling")
    Q = 0.5 * (comp["ell"] * comp["grad_sq"] + comp["mu_tail"])
    P = (comp["lp_grad"] - comp["lp_val"]) / p
    if p == 2:
        return (math.inf, math.inf) if Q + P > 0 else (0.0, 0.0)
    if P >= 0:
        return math.inf, math.inf
    if Q <= 0:
        return 0.0, 0.0
    nu = (2.0 * Q / (-p * P)) ** (1.0 / (p - 2.0))
    return nu, nu * nu * Q + nu**p * P


EXPONENT_VARIANTS = ("HalfPminus2", "Pminus2")


@dataclass(frozen=True)
class GlobalCondition:
    lhs: float
    rhs: float
    variant: str
    applicable: bool = True

    @property
    def passed(self) -> bool:
        return self.applicable and self.lhs < self.rhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "variant": self.variant,
                "applicable": self.applicable, "passed": self.passed}


def global_condition(E0: float, l: float, C: float, p: float, variant: str = "HalfPminus2"):
    """``C^p l^(1-p) (2p E0 / (p-2))^e < l`` with ``e = (p-2)/2`` or ``p-2``."""
    if variant not in EXPONENT_VARIANTS:
        raise ValueError(f"unknown exponent variant {variant!r}")
    if p == 2:
        return GlobalCondition(math.nan, l, variant, applicable=False)
    if p < 2:
        raise ValueError("p must be >= 2")
    e = (p - 2.0) / 2.0 if variant == "HalfPminus2" else p - 2.0
    lhs = C**p * l ** (1.0 - p) * (2.0 * p / (p - 2.0) * E0) ** e
    return GlobalCondition(lhs, l, variant)


@dataclass
class CertificateReport:
    stable_set_member: bool
    d_upper: float
    global_condition_lhs: float
    global_condition_rhs: float
    exponent_variant: str
    global_condition_passed: bool
    alternate: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        if math.isinf(out["d_upper"]):
            out["d_upper"] = "inf"
        return out


def certificate_report(state, mem, k, p: float, E0: float, C: float,
                       variant: str = "HalfPminus2") -> CertificateReport:
    I = modified_energy_I(state, mem, k, p)
    try:
        _, d_upper = nehari_scale(state, mem, k, p)
    except UndefinedScalingError:
        d_upper = math.inf
    main = global_condition(E0, k.ell, C, p, variant)
    other = global_condition(E0, k.ell, C, p,
                             "Pminus2" if variant == "HalfPminus2" else "HalfPminus2")
    return CertificateReport(bool(I > 0), d_upper, main.lhs, main.rhs, variant, main.passed,
                             other.to_dict())


def lemma_constants(nu: float, l: float, p: float, E0: float, m0: float, c_embed: float = 1.0,
                    c_nu: float = 1.0) -> dict:
    """Diagnostic constants ``a`` and ``b`` of the Lyapunov derivative estimate."""
    if not 0 < l < 1:
        raise PreconditionError("need 0 < l < 1")
    if not 0 < nu < 1 - l:
        raise PreconditionError(f"need 0 < nu < 1 - l = {1 - l}, got {nu}")
    if p <= 2:
        raise PreconditionError("need p > 2")
    e = (p - 2.0) / 2.0
    a = c_nu * (1.0 + 2.0 * (1.0 - l) ** 2 - (2.0 * p / ((p - 2.0) * l) * E0) ** e)
    b = ((1.0 - l) / (4.0 * nu) + (2.0 * nu + 1.0 / (4.0 * nu)) * (1.0 - l)
         + 2.0 * nu * (1.0 - l) ** (p - 1.0) * c_embed * (8.0 / (1.0 - l) * E0 + 2.0 * m0**2) ** e)
    return {"a": a, "b": b, "a_positive": a > 0, "b_positive": b > 0}


def boundedness_check(trace, l: float, p: float, E0: float | None = None) -> dict:
    """``l (p-2)/(2p) |y_x|^2 + |y'|^2 / 2`` against ``E(0)``, per sample."""
    ell_grad = _col(trace, "grad_sq") if _has(trace, "grad_sq") else None
    if ell_grad is None:
        raise ValueError("trace lacks the grad_sq diagnostic column")
    lhs = l * (p - 2.0) / (2.0 * p) * ell_grad + _col(trace, "kin")
    E0 = float(_col(trace, "E")[0]) if E0 is None else E0
    return {"max_lhs": float(lhs.max()), "E0": E0, "max_ratio": float(lhs.max() / E0) if E0 else math.nan}


def _has(trace, name):
    return hasattr(trace, "has_column") and trace.has_column(name)


def history_deviation(times, states, grid, history, s: float, gradient: bool = False):
    """``int |y(t) - y(t - s)|^2 dx`` at every stored sample time.

    ``states`` are nodal snapshots at ``times`` (uniformly spaced); ``t - s``
    falls back on the prescribed past when negative and on linear
    interpolation between snapshots otherwise.
    """
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    out = np.empty(times.size)
    for n, t in enumerate(times):
        back = t - s
        if back < 0:
            past = history.at(-back)
        else:
            j = int(np.searchsorted(times, back, side="right")) - 1
            j = min(max(j, 0), times.size - 1)
            if j + 1 < times.size and times[j + 1] > times[j]:
                w = (back - times[j]) / (times[j + 1] - times[j])
                past = (1 - w) * states[j] + w * states[j + 1]
            else:
                past = states[j]
        diff = states[n] - past
        if gradient:
            gd = grid.grad(diff)
            out[n] = grid.inner_edges(gd, gd)
        else:
            out[n] = grid.inner(diff, diff)
    return out


def n1_bound(E0: float, l: float, m0: float) -> float:
    """``8 E0 / (1 - l) + 2 m0^2``."""
    return 8.0 / (1.0 - l) * E0 + 2.0 * m0**2
