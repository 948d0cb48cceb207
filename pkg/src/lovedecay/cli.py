"""Command-line entry point ``lovedecay``.

Exit codes: 0 pass, 1 property failed, 2 usage/config error, 3 numerical
divergence.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import decay, functionals
from .config import (apply_overrides, load_config, parse_kernel, parse_modulus, parse_run_config,
                     resolve_output)
from .errors import (ConfigError, DivergenceError, EquivalenceUndefinedError, LoveDecayError,
                     UnsupportedManufacturedCaseError)
from .functionals import COLUMNS, EnergySample
from .grid import poincare_constant
from .kernel import certify_condition_H, certify_hyp1

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------


def format_float(x) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(x))


def write_trace(path, samples) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for s in samples:
            w.writerow([format_float(v) for v in s.row()])


def read_trace(path) -> list[EnergySample]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ConfigError(f"unexpected trace header in {path}")
        return [EnergySample(*(float(v) for v in row)) for row in reader if row]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_report(path, report: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


class _SampleList(list):
    """Minimal trace interface over a list of samples."""

    def column(self, name):
        return np.asarray([getattr(s, name) for s in self], dtype=float)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def _certificates(rc) -> dict:
    out = {}
    if rc.certify.get("hyp1", True):
        out["hyp1"] = certify_hyp1(rc.kernel).to_dict()
    if rc.certify.get("condition_H", True) and rc.modulus is not None:
        out["condition_H"] = certify_condition_H(rc.kernel, rc.modulus).to_dict()
    return out


def cmd_check_kernel(raw: dict, out_dir) -> int:
    kernel = parse_kernel(raw)
    modulus = parse_modulus(raw, required=True)
    hyp = certify_hyp1(kernel)
    report = {"kernel": kernel.to_spec(), "modulus": modulus.to_spec(), "hyp1": hyp.to_dict(),
              "condition_H": certify_condition_H(kernel, modulus).to_dict()}
    name = raw.get("outputs", {}).get("report_path", "kernel_report.json")
    write_report(resolve_output(out_dir, name), report)
    if not hyp.passed:
        print(f"Hyp1 failed: {', '.join(hyp.failed_clauses)}", file=sys.stderr)
    return EXIT_OK if hyp.passed else EXIT_FAIL


def _post_run_report(rc, trace) -> dict:
    """Certificates, dissipation, stability and equivalence diagnostics for a finished run."""
    cfg = rc.solver
    E0 = trace.samples[0].E
    report = {"certificates": _certificates(rc), "steps": trace.steps,
              "samples": len(trace), "diagnostics": trace.diagnostics,
              "dissipation": functionals.dissipation_check(trace, dt=cfg.dt, dx=rc.grid.dx)}
    if cfg.power and cfg.p > 2:
        C = poincare_constant(rc.grid)
        cert = functionals.global_condition(E0, rc.kernel.ell, C, cfg.p, rc.fit.get("variant", "HalfPminus2"))
        I = trace.column("I")
        report["global_condition"] = cert.to_dict()
        report["stable_set"] = {"I0": float(I[0]), "min_I": float(I.min()),
                                "holds": bool(np.all(I > -1e-8 * (1 + abs(I[0]))))}
        lhs = rc.kernel.ell * (cfg.p - 2) / (2 * cfg.p) * trace.column("grad_sq") + trace.column("kin")
        report["boundedness"] = {"max_lhs": float(lhs.max()), "E0": E0,
                                 "holds": bool(np.all(lhs <= 1.01 * E0))}
    eps2 = float(rc.fit.get("eps2", 1.0))
    try:
        eps1 = rc.fit.get("eps1") or functionals.fit_eps1(trace, eps2, float(rc.fit.get("target_ratio", 10)))
        c1, c2 = functionals.equivalence_fit(trace, eps1, eps2)
        trace.set_lyapunov(eps1, eps2)
        report["equivalence"] = {"eps1": eps1, "eps2": eps2, "c1": c1, "c2": c2,
                                 "verified": bool(0 < c1 <= c2 < math.inf)}
    except (EquivalenceUndefinedError, ValueError) as exc:
        report["equivalence"] = {"error": str(exc)}
    if trace.states is not None and len(trace.states) > 1:
        m0 = rc.history.m0(rc.grid)
        bound = functionals.n1_bound(E0, rc.kernel.ell, m0) if rc.kernel.ell < 1 else math.inf
        n1 = {}
        for s in rc.fit.get("n1_s", []):
            dev = functionals.history_deviation(trace.times, trace.states, rc.grid, rc.history, float(s))
            n1[str(s)] = {"max": float(dev.max()), "bound": bound, "holds": bool(dev.max() <= bound + 1e-8)}
        report["history_bound"] = n1
    return report


def _simulate(rc, out_dir):
    """Run and write outputs; return ``(exit code, trace or None, report)``."""
    from .solver import run

    trace_path = resolve_output(out_dir, rc.outputs["trace_path"])
    report_path = resolve_output(out_dir, rc.outputs["report_path"])
    try:
        trace = run(rc.solver, rc.grid, rc.kernel, rc.history, y1=rc.y1)
    except DivergenceError as exc:
        partial = getattr(exc, "trace", None)
        if partial is not None:
            write_trace(trace_path, partial.samples)
        report = {"diverged": True, "step": exc.step, "t": exc.t, "message": str(exc)}
        write_report(report_path, report)
        print(str(exc), file=sys.stderr)
        return EXIT_DIVERGED, partial, report
    report = _post_run_report(rc, trace)
    return EXIT_OK, trace, report


def cmd_simulate(raw: dict, out_dir) -> int:
    rc = parse_run_config(raw)
    code, trace, report = _simulate(rc, out_dir)
    if code != EXIT_OK:
        return code
    write_trace(resolve_output(out_dir, rc.outputs["trace_path"]), trace.samples)
    write_report(resolve_output(out_dir, rc.outputs["report_path"]), report)
    diss = report["dissipation"]
    return EXIT_OK if diss.get("passed", True) else EXIT_FAIL


def cmd_verify_decay(raw: dict, out_dir) -> int:
    source = raw.get("input", {}).get("trace")
    if source is not None:
        modulus = parse_modulus(raw, required=True)
        samples = _SampleList(read_trace(source))
        if not samples:
            raise ConfigError("input trace is empty")
        trace, report = samples, {"input_trace": str(source)}
        outputs = {"trace_path": "trace.csv", "report_path": "report.json"}
        outputs.update(raw.get("outputs", {}))
    else:
        rc = parse_run_config(raw, require_modulus=True)
        modulus, outputs = rc.modulus, rc.outputs
        code, trace, report = _simulate(rc, out_dir)
        if code != EXIT_OK:
            return code
        samples = trace.samples
    if trace.column("E")[0] <= 0 and not np.all(trace.column("E") == 0):
        raise ConfigError("decay fit needs E(0) > 0")
    fit = decay.fit_bound(trace.column("t"), modulus, E=trace.column("E"))
    for s, b in zip(samples, fit.bound_curve):
        s.bound_rhs = float(b)
    report["decay_fit"] = fit.to_dict()
    write_trace(resolve_output(out_dir, outputs["trace_path"]), samples)
    write_report(resolve_output(out_dir, outputs["report_path"]), report)
    if fit.degenerate:
        return EXIT_OK
    return EXIT_OK if fit.holds and fit.decaying else EXIT_FAIL


def cmd_mms(raw: dict, out_dir) -> int:
    from .solver import mms_convergence

    kernel = parse_kernel(raw)
    m = {"family": "exp", "rate": 1.0, "amplitude": 1.0, "p": 3.0, "L": 1.0,
         "sizes": [50, 100, 200], "dt_spatial": 1e-3, "temporal_N": 100,
         "dts": [4e-3, 2e-3, 1e-3], "T_final": 1.0, "min_spatial": 1.8, "min_temporal": 0.9}
    m.update(raw.get("mms", {}))
    try:
        table = mms_convergence(kernel, m["family"], float(m["rate"]), float(m["amplitude"]),
                                float(m["L"]), float(m["p"]), tuple(m["sizes"]), float(m["dt_spatial"]),
                                int(m["temporal_N"]), tuple(m["dts"]), float(m["T_final"]))
    except UnsupportedManufacturedCaseError as exc:
        print(f"unsupported manufactured case: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid mms section: {exc}") from exc
    passed = table["spatial_order"] >= m["min_spatial"] and table["temporal_order"] >= m["min_temporal"]
    table["passed"] = passed
    name = raw.get("outputs", {}).get("report_path", "mms_report.json")
    write_report(resolve_output(out_dir, name), table)
    with open(resolve_output(out_dir, "mms_orders.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "h", "error"])
        for h, e in zip(table["dx"], table["spatial_error"]):
            w.writerow(["spatial", format_float(h), format_float(e)])
        for h, e in zip(table["dts"], table["temporal_error"]):
            w.writerow(["temporal", format_float(h), format_float(e)])
    return EXIT_OK if passed else EXIT_FAIL


def _sweep_child(args):
    raw, out_dir = args
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    try:
        return cmd_simulate(raw, out_dir)
    except (ConfigError, LoveDecayError, ValueError) as exc:
        Path(out_dir, "error.txt").write_text(str(exc) + "\n")
        return EXIT_CONFIG


def sweep_cells(raw: dict) -> list[tuple[dict, dict]]:
    """Cross product of ``sweep.kernels`` x ``sweep.p`` x ``sweep.amplitude`` (x ``sweep.dt``)."""
    spec = raw.get("sweep")
    if not isinstance(spec, dict):
        raise ConfigError("missing 'sweep' section")
    lists = {
        "kernels": spec.get("kernels", [raw.get("kernel")]),
        "p": spec.get("p", [raw.get("solver", {}).get("p", 3.0)]),
        "amplitude": spec.get("amplitude", [None]),
        "dt": spec.get("dt", [None]),
    }
    for name, values in lists.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep list {name!r} is empty")
    base = {k: v for k, v in raw.items() if k != "sweep"}
    cells = []
    for kern, p, amp, dt in itertools.product(*lists.values()):
        child = json.loads(json.dumps(base))
        child["kernel"] = kern
        child.setdefault("solver", {})["p"] = p
        if amp is not None:
            child.setdefault("initial", {})["y0_modes"] = [[1, amp]]
        if dt is not None:
            child["solver"]["dt"] = dt
        cells.append(({"kernel": kern, "p": p, "amplitude": amp, "dt": dt}, child))
    return cells


def cmd_sweep(raw: dict, out_dir, jobs: int = 1) -> int:
    cells = sweep_cells(raw)
    dirs = [Path(out_dir) / f"cell_{i:03d}" for i in range(len(cells))]
    work = [(child, str(d)) for (_, child), d in zip(cells, dirs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_sweep_child, work))
    else:
        codes = [_sweep_child(w) for w in work]
    matrix = [{"cell": d.name, **params, "exit": code}
              for (params, _), d, code in zip(cells, dirs, codes)]
    write_report(Path(out_dir) / "sweep_report.json", {"cells": matrix})
    if any(c >= EXIT_CONFIG for c in codes):
        return EXIT_CONFIG
    return EXIT_FAIL if any(c == EXIT_FAIL for c in codes) else EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


COMMANDS = ("check-kernel", "simulate", "verify-decay", "mms", "sweep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lovedecay", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    parser.add_argument("--seed", type=int, default=None, help="reserved; runs are deterministic")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a dotted config key, value parsed as JSON")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out_dir = Path(args.out)
    try:
        raw = apply_overrides(load_config(args.config), args.override)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "check-kernel":
            return cmd_check_kernel(raw, out_dir)
        if args.command == "simulate":
            return cmd_simulate(raw, out_dir)
        if args.command == "verify-decay":
            return cmd_verify_decay(raw, out_dir)
        if args.command == "mms":
            return cmd_mms(raw, out_dir)
        return cmd_sweep(raw, out_dir, max(1, args.jobs))
    except (ConfigError, LoveDecayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
