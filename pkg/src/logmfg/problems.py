"""Canonical problem instances used by the tests, the acceptance suite and the CLI defaults."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec, ScalarField
from .hamiltonian import HamiltonianParams
from .mfg import MFGProblem, normalized_density


def constant_problem(d: int = 1, n: int = 64, nt: int = 100, T: float = 0.5, eps: float = 0.0,
                     gamma: float = 1.2) -> MFGProblem:
    """``a = 1, V = 0, m0 = 1, uT = 0``: exact solution ``u = (1 - ln(1 + eps))(t - T)``, ``m = 1``."""
    grid = GridSpec(d, n, nt, T)
    return MFGProblem(grid, HamiltonianParams.model(d, gamma), ScalarField.constant(grid, 1.0),
                      ScalarField.constant(grid, 0.0), eps)


def constant_solution_u(grid: GridSpec, eps: float = 0.0) -> np.ndarray:
    t = grid.times().reshape((-1,) + (1,) * grid.d)
    return np.broadcast_to((1.0 - np.log1p(eps)) * (t - grid.T), (grid.nt + 1, *grid.shape))


def smooth_m0(amplitude: float = 0.1):
    def m0(x):
        return 1.0 + amplitude * np.cos(2 * np.pi * x[0])
    return m0


def smooth_problem(n: int = 64, nt: int = 32, T: float = 0.5, eps: float = 0.0, gamma: float = 1.2,
                   amplitude: float = 0.1, d: int = 1) -> MFGProblem:
    """``m0 = 1 + amplitude cos(2 pi x)`` with the constant-problem Hamiltonian and ``uT = 0``."""
    grid = GridSpec(d, n, nt, T)
    return MFGProblem(grid, HamiltonianParams.model(d, gamma), normalized_density(grid, smooth_m0(amplitude)),
                      ScalarField.constant(grid, 0.0), eps)
