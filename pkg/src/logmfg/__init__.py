"""Finite-difference mean-field games with a regularised logarithmic coupling on the flat torus."""

from __future__ import annotations

__version__ = "0.1.0"

from .grid import FieldTrajectory, GridSpec, ScalarField
from .hamiltonian import FourierSeries, HamiltonianParams, check_assumptions, legendre_lagrangian
from .log_coupling import EpsSchedule, g_eps
from .mfg import MFGProblem, MFGSolution, PicardOptions, eps_continuation, picard_solve

__all__ = [
    "EpsSchedule", "FieldTrajectory", "FourierSeries", "GridSpec", "HamiltonianParams", "MFGProblem",
    "MFGSolution", "PicardOptions", "ScalarField", "check_assumptions", "eps_continuation", "g_eps",
    "legendre_lagrangian", "picard_solve",
]
