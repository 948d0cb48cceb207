"""Time the compiled and pure-numpy stepping kernels on the canonical problem.

    python3 benchmarks/bench_kernels.py --steps 2000 --N 200
"""

import argparse
import time

import numpy as np

from lovedecay import _kernels
from lovedecay.grid import Grid
from lovedecay.history import ModalMemory, PrescribedHistory
from lovedecay.kernel import ExponentialKernel, PolynomialKernel
from lovedecay.solver import SolverConfig, acceleration


def setup(kernel, N):
    grid = Grid(1.0, N)
    hist = PrescribedHistory.stationary(grid.sine_mode(1, 0.1))
    mem = ModalMemory(grid, kernel, hist)
    cfg = SolverConfig(dt=1e-3, p=3.0)
    y = hist.profile.copy()
    v = grid.zeros()
    a = acceleration(grid, mem, y, v, 0.0, cfg)
    return grid, mem, cfg, y, v, a


def time_backend(mod, kernel, N, steps, repeats):
    best = np.inf
    final = None
    for _ in range(repeats):
        grid, mem, cfg, y, v, a = setup(kernel, N)
        decay, c_prev, c_new = mem.coefficients(cfg.dt)
        aux = np.array([0.0, 0.0, 0.0, 0.0, 0.0, mem.gsq])
        op = mod.make_operator(grid.N, grid.dx, 1.0 + cfg.alpha)
        start = time.perf_counter()
        done = mod.advance(y, v, a, mem.g, mem.m, mem.Q, aux, decay, c_prev, c_new, op, grid.dx,
                           cfg.p, cfg.dt, mem.mass, np.zeros((steps, 0)), np.zeros((0, grid.N)),
                           steps, mem.track_q)
        best = min(best, time.perf_counter() - start)
        assert done == steps
        final = y
    return best, final


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--N", type=int, default=200)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = _kernels.backends()
    kernels = {"exponential": ExponentialKernel(0.5, 1.0), "polynomial": PolynomialKernel(1.0, 3.0)}
    print(f"N={args.N}, steps={args.steps}, best of {args.repeats}")
    print(f"{'kernel':<12} {'modes':>5} {'backend':<8} {'us/step':>9} {'speedup':>8}")
    for name, kernel in kernels.items():
        modes = kernel.modes()[0].size
        results = {b: time_backend(mod, kernel, args.N, args.steps, args.repeats)
                   for b, mod in backends.items()}
        ref_t, ref_y = results["python"]
        for b, (t, y) in results.items():
            diff = np.max(np.abs(y - ref_y))
            print(f"{name:<12} {modes:>5} {b:<8} {1e6 * t / args.steps:>9.2f} {ref_t / t:>7.1f}x"
                  + (f"  (max |dy| vs python {diff:.1e})" if b != "python" else ""))


if __name__ == "__main__":
    main()
