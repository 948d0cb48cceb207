"""JSON run configuration: parsing, overrides and construction of model objects.

Example::

    {
      "schema_version": 1,
      "grid": {"L": 1.0, "N": 200},
      "kernel": {"family": "exponential", "a": 0.5, "b": 1.0},
      "modulus": {"family": "linear", "c": 1.0},
      "history": {"family": "stationary"},
      "initial": {"y0_modes": [[1, 0.1]], "y1_modes": []},
      "solver": {"dt": 0.001, "p": 3, "T_final": 20, "sample_stride": 1,
                 "damping_implicit": true, "source_mode": "PowerNonlinearity"},
      "outputs": {"trace_path": "trace.csv", "report_path": "report.json"}
    }

The history is ``y(x, -tau) = theta(tau) Y(x)`` with ``Y`` the profile given by
``y0_modes`` (sums of ``amp * sin(k pi x / L)``), so ``y(., 0) = Y`` always.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, NonIntegrableKernelError
from .grid import Grid
from .history import PrescribedHistory, history_from_spec
from .kernel import ConvexModulus, MemoryKernel, kernel_from_spec, modulus_from_spec
from .solver import SolverConfig, default_dt

SCHEMA_VERSION = 1
SECTIONS = ("schema_version", "grid", "kernel", "modulus", "history", "initial", "solver",
            "outputs", "fit", "certify", "mms", "sweep", "input")

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "grid": {"L": 1.0, "N": 200},
    "history": {"family": "stationary"},
    "initial": {"y0_modes": [[1, 0.1]], "y1_modes": []},
    "solver": {"p": 3.0, "T_final": 1.0, "sample_stride": 1, "damping_implicit": True,
               "source_mode": "PowerNonlinearity", "allow_large_dt": False},
    "outputs": {"trace_path": "trace.csv", "report_path": "report.json"},
    "fit": {"eps2": 1.0, "target_ratio": 10.0, "variant": "HalfPminus2", "n1_s": [0.1, 1.0, 10.0]},
    "certify": {"hyp1": True, "condition_H": True},
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def apply_overrides(raw: dict, overrides) -> dict:
    """Set ``a.b.c=value`` entries; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigError(f"override path {key!r} crosses a non-object")
            node = child
        node[parts[-1]] = value
    return out


def _merged(raw: dict, section: str) -> dict:
    base = dict(DEFAULTS.get(section, {}))
    given = raw.get(section, {})
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    base.update(given)
    return base


def modes_profile(grid: Grid, modes) -> np.ndarray:
    out = grid.zeros()
    for entry in modes or ():
        try:
            k, amp = entry
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"mode entry {entry!r} is not [k, amplitude]") from exc
        out += grid.sine_mode(int(k), float(amp))
    return out


@dataclass
class RunConfig:
    raw: dict
    grid: Grid
    kernel: MemoryKernel
    modulus: ConvexModulus | None
    history: PrescribedHistory
    y1: np.ndarray
    solver: SolverConfig
    outputs: dict
    fit: dict
    certify: dict

    @property
    def y0(self) -> np.ndarray:
        return self.history.at(0.0)


def parse_kernel(raw: dict) -> MemoryKernel:
    if "kernel" not in raw:
        raise ConfigError("missing 'kernel' section")
    try:
        return kernel_from_spec(raw["kernel"])
    except (KeyError, TypeError, ValueError, DomainError, NonIntegrableKernelError) as exc:
        raise ConfigError(f"invalid kernel spec: {exc}") from exc


def parse_modulus(raw: dict, required: bool = False) -> ConvexModulus | None:
    if "modulus" not in raw:
        if required:
            raise ConfigError("missing 'modulus' section")
        return None
    try:
        return modulus_from_spec(raw["modulus"])
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise ConfigError(f"invalid modulus spec: {exc}") from exc


def parse_run_config(raw: dict, require_modulus: bool = False) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    g = _merged(raw, "grid")
    try:
        grid = Grid(float(g["L"]), int(g["N"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc
    kernel = parse_kernel(raw)
    modulus = parse_modulus(raw, require_modulus)
    init = _merged(raw, "initial")
    profile = modes_profile(grid, init.get("y0_modes"))
    y1 = modes_profile(grid, init.get("y1_modes"))
    hist_spec = _merged(raw, "history")
    if hist_spec.get("family") == "zero" and np.any(profile != 0):
        raise ConfigError("zero history requires y(., 0) = 0 (set y0_modes to [])")
    try:
        history = history_from_spec(hist_spec, profile, grid)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid history spec: {exc}") from exc
    s = _merged(raw, "solver")
    if s.get("source_mode") == "ManufacturedForcing":
        raise ConfigError("manufactured forcing runs go through the 'mms' subcommand")
    try:
        solver = SolverConfig(
            dt=float(s["dt"]) if s.get("dt") is not None else default_dt(grid),
            p=float(s["p"]), T_final=float(s["T_final"]), sample_stride=int(s["sample_stride"]),
            damping_implicit=bool(s["damping_implicit"]), source_mode=s["source_mode"],
            allow_large_dt=bool(s.get("allow_large_dt", False)),
            keep_states=bool(s.get("keep_states", True)),
            eps1=float(s.get("eps1", 1.0)), eps2=float(s.get("eps2", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver section: {exc}") from exc
    return RunConfig(raw, grid, kernel, modulus, history, y1, solver, _merged(raw, "outputs"),
                     _merged(raw, "fit"), _merged(raw, "certify"))


def resolve_output(out_dir, name) -> Path:
    path = Path(name)
    return path if path.is_absolute() else Path(out_dir) / path
