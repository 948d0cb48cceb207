"""Love equation with infinite memory: simulation, energy functionals and decay fits."""

from .decay import DecayFit, fit_bound, h1, h1_inverse
from .grid import Grid
from .history import HistoryBuffer, ModalMemory, PrescribedHistory, make_memory
from .kernel import (ExponentialKernel, LinearModulus, PolynomialKernel, PowerModulus, TabulatedKernel,
                     certify_condition_H, certify_hyp1)
from .solver import ManufacturedSolution, SolverConfig, SourceMode, Trace, mms_convergence, run

__version__ = "0.1.0"

__all__ = [
    "DecayFit", "ExponentialKernel", "Grid", "HistoryBuffer", "LinearModulus", "ManufacturedSolution",
    "ModalMemory", "PolynomialKernel", "PowerModulus", "PrescribedHistory", "SolverConfig", "SourceMode",
    "TabulatedKernel", "Trace", "certify_condition_H", "certify_hyp1", "fit_bound", "h1", "h1_inverse",
    "make_memory", "mms_convergence", "run",
]
