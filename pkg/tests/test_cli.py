import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from lovedecay.cli import main, read_trace, write_trace
from lovedecay.functionals import COLUMNS
from lovedecay.grid import Grid
from lovedecay.history import PrescribedHistory
from lovedecay.kernel import ExponentialKernel
from lovedecay.solver import SolverConfig, run

BASE = {
    "schema_version": 1,
    "grid": {"L": 1.0, "N": 20},
    "kernel": {"family": "exponential", "a": 0.5, "b": 1.0},
    "modulus": {"family": "linear", "c": 1.0},
    "history": {"family": "stationary"},
    "initial": {"y0_modes": [[1, 0.1]], "y1_modes": []},
    "solver": {"p": 3, "T_final": 0.5, "sample_stride": 4},
}


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def with_(base=BASE, **sections):
    out = json.loads(json.dumps(base))
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key].update(value)
        else:
            out[key] = value
    return out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def cli(tmp_path, command, cfg, *extra):
    out = tmp_path / "out"
    return main([command, "--config", write_config(tmp_path, cfg), "--out", str(out), *extra]), out


def test_check_kernel_exit_codes(tmp_path):
    code, out = cli(tmp_path, "check-kernel", BASE)
    assert code == 0
    report = json.loads((out / "kernel_report.json").read_text())
    assert report["hyp1"]["passed"] and abs(report["hyp1"]["values"]["ell"] - 0.5) <= 1e-10
    code, out = cli(tmp_path, "check-kernel", with_(kernel={"a": 2.0}))
    assert code == 1
    report = json.loads((out / "kernel_report.json").read_text())
    assert report["hyp1"]["failed"] == ["ell_positive"]
    missing = {k: v for k, v in BASE.items() if k != "kernel"}
    assert cli(tmp_path, "check-kernel", missing)[0] == 2


def test_simulate_t_final_zero_gives_one_row(tmp_path):
    code, out = cli(tmp_path, "simulate", with_(solver={"T_final": 0.0}))
    assert code == 0
    table = rows(out / "trace.csv")
    assert tuple(table[0]) == COLUMNS and len(table) == 2


def test_simulate_report_contents(tmp_path):
    code, out = cli(tmp_path, "simulate", BASE)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    for key in ("certificates", "dissipation", "global_condition", "stable_set", "boundedness",
                "equivalence", "history_bound"):
        assert key in report
    assert report["dissipation"]["passed"] and report["equivalence"]["verified"]
    E = [float(r[1]) for r in rows(out / "trace.csv")[1:]]
    assert all(b <= a for a, b in zip(E, E[1:]))


def test_simulate_divergence_exit_3_keeps_partial_trace(tmp_path):
    cfg = with_(solver={"dt": 5.0, "T_final": 100.0, "allow_large_dt": True, "sample_stride": 1})
    with pytest.warns(RuntimeWarning):
        code, out = cli(tmp_path, "simulate", cfg)
    assert code == 3
    table = rows(out / "trace.csv")
    assert len(table) >= 2
    report = json.loads((out / "report.json").read_text())
    assert report["diverged"] and report["step"] >= 1


def test_malformed_configs_exit_2(tmp_path):
    assert cli(tmp_path, "simulate", with_(grid={"N": 1}))[0] == 2
    assert cli(tmp_path, "simulate", with_(bogus={}))[0] == 2
    assert cli(tmp_path, "simulate", with_(schema_version=7))[0] == 2
    assert cli(tmp_path, "simulate", with_(history={"family": "zero"}))[0] == 2
    assert cli(tmp_path, "verify-decay", with_(modulus={"family": "power", "r": 0.5}))[0] == 2
    assert cli(tmp_path, "verify-decay", with_(modulus={"family": "cubic"}))[0] == 2
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 2
    assert main(["frobnicate", "--config", "x.json"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad)]) == 2


def test_verify_decay_on_simulated_run(tmp_path):
    cfg = with_(grid={"N": 50}, solver={"T_final": 5.0, "sample_stride": 20})
    code, out = cli(tmp_path, "verify-decay", cfg)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    fit = report["decay_fit"]
    assert fit["holds"] and fit["decaying"]
    bound = [float(r[-1]) for r in rows(out / "trace.csv")[1:]]
    E = [float(r[1]) for r in rows(out / "trace.csv")[1:]]
    assert all(e <= b for e, b in zip(E, bound))


def test_verify_decay_constant_trace_exits_1(tmp_path):
    trace = tmp_path / "flat.csv"
    with open(trace, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for n in range(20):
            w.writerow([repr(0.5 * n), "1.0"] + ["0.0"] * (len(COLUMNS) - 2))
    cfg = {"modulus": {"family": "linear", "c": 1.0}, "input": {"trace": str(trace)}}
    code, out = cli(tmp_path, "verify-decay", cfg)
    assert code == 1
    assert json.loads((out / "report.json").read_text())["decay_fit"]["decaying"] is False


def test_mms_exit_codes(tmp_path):
    good = {"kernel": {"family": "exponential", "a": 0.5, "b": 2.0}}
    code, out = cli(tmp_path, "mms", good)
    assert code == 0
    table = rows(out / "mms_orders.csv")
    assert table[0] == ["kind", "h", "error"] and len(table) == 7
    assert cli(tmp_path, "mms", {"kernel": {"family": "exponential", "a": 0.5, "b": 1.0}})[0] == 2
    assert cli(tmp_path, "mms", dict(good, mms={"amplitude": 0.0}))[0] == 2


def test_sweep_two_by_two(tmp_path):
    cfg = with_(sweep={"kernels": [{"family": "exponential", "a": 0.5, "b": 1.0},
                                   {"family": "polynomial", "a": 1.0, "q": 3.0}],
                       "amplitude": [0.1, 0.2]})
    code, out = cli(tmp_path, "sweep", cfg, "--jobs", "2")
    assert code == 0
    report = json.loads((out / "sweep_report.json").read_text())
    assert len(report["cells"]) == 4
    for cell in report["cells"]:
        assert (out / cell["cell"] / "report.json").exists()


def test_sweep_empty_list_and_diverging_cell(tmp_path):
    assert cli(tmp_path, "sweep", with_(sweep={"p": []}))[0] == 2
    cfg = with_(solver={"allow_large_dt": True, "T_final": 50.0}, sweep={"dt": [0.01, 5.0]})
    with pytest.warns(RuntimeWarning):
        code, out = cli(tmp_path, "sweep", cfg)
    assert code == 2
    cells = json.loads((out / "sweep_report.json").read_text())["cells"]
    assert [c["exit"] for c in cells] == [0, 3]


def test_trace_csv_round_trip_is_exact(tmp_path):
    grid = Grid(1.0, 20)
    trace = run(SolverConfig(dt=0.01, T_final=0.3), grid, ExponentialKernel(0.5, 1.0),
                PrescribedHistory.stationary(grid.sine_mode(1, 0.1)))
    path = tmp_path / "trace.csv"
    write_trace(path, trace.samples)
    back = read_trace(path)
    assert len(back) == len(trace.samples)
    for a, b in zip(trace.samples, back):
        for x, y in zip(a.row(), b.row()):
            assert (math.isnan(x) and math.isnan(y)) or x == y


def test_runs_are_byte_identical(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    path = write_config(tmp_path, BASE)
    assert main(["simulate", "--config", path, "--out", str(first)]) == 0
    assert main(["simulate", "--config", path, "--out", str(second)]) == 0
    assert (first / "trace.csv").read_bytes() == (second / "trace.csv").read_bytes()


def test_override(tmp_path):
    code, out = cli(tmp_path, "simulate", BASE, "--override", "solver.T_final=0",
                    "--override", "outputs.trace_path=short.csv")
    assert code == 0
    assert len(rows(out / "short.csv")) == 2
    assert cli(tmp_path, "simulate", BASE, "--override", "novalue")[0] == 2


def test_module_entry_point(tmp_path):
    path = write_config(tmp_path, BASE)
    proc = subprocess.run([sys.executable, "-m", "lovedecay", "check-kernel", "--config", path,
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
