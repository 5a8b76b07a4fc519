"""Damped Picard iteration for the regularised system and continuation in ``eps``."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fokker_planck import MASS_TOL, solve_forward
from .grid import FieldTrajectory, GridSpec, ScalarField, central_diff, central_div, integrate, laplacian_array, write_field_dump
from .hamiltonian import HamiltonianParams
from .hjb import HJBConfig, required_alpha, solve_backward
from .log_coupling import EpsSchedule, PositivityError, g_eps_array, g_eps_trajectory

logger = logging.getLogger(__name__)


class PicardPositivityError(PositivityError):
    """Raised when an iterate loses positivity; carries the offending iterate."""

    def __init__(self, msg: str, iteration: int, m_iterate: FieldTrajectory, frame: int | None = None):
        super().__init__(f"{msg} (Picard iteration {iteration})")
        self.frame = frame
        self.iteration = iteration
        self.m_iterate = m_iterate


@dataclass(frozen=True)
class MFGProblem:
    grid: GridSpec
    params: HamiltonianParams
    m0: ScalarField
    uT: ScalarField
    eps: float = 0.0

    def __post_init__(self) -> None:
        if self.m0.grid != self.grid or self.uT.grid != self.grid:
            raise ValueError("m0 and uT must live on the problem grid")
        if self.params.d != self.grid.d:
            raise ValueError("Hamiltonian dimension does not match the grid")
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if np.min(self.m0.values) < 0:
            raise ValueError("m0 must be nonnegative")
        mass = integrate(self.m0)
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"m0 has mass {mass:.12f}, expected 1 within {MASS_TOL:g}")
        if self.eps == 0 and np.min(self.m0.values) <= 0:
            raise ValueError("eps = 0 requires a strictly positive m0")

    def with_eps(self, eps: float) -> MFGProblem:
        return replace(self, eps=float(eps))

    def with_grid(self, grid: GridSpec, m0_func, uT_func) -> MFGProblem:
        return replace(self, grid=grid, m0=normalized_density(grid, m0_func),
                       uT=ScalarField.from_function(grid, uT_func))


def normalized_density(grid: GridSpec, func) -> ScalarField:
    """Sample ``func`` at cell centres and rescale to unit discrete mass."""
    vals = np.broadcast_to(func(grid.coords()), grid.shape).astype(float)
    return ScalarField(grid, vals / integrate(vals, grid))


@dataclass
class IterationReport:
    u_updates: list[float] = field(default_factory=list)
    m_updates: list[float] = field(default_factory=list)
    omegas: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    converged: bool = False
    hjb_residual: float = float("nan")
    fp_residual: float = float("nan")

    @property
    def iterations(self) -> int:
        return len(self.m_updates)


@dataclass
class MFGSolution:
    u_traj: FieldTrajectory
    m_traj: FieldTrajectory
    eps: float
    alpha: float
    report: IterationReport

    @property
    def grid(self) -> GridSpec:
        return self.u_traj.grid


@dataclass(frozen=True)
class PicardOptions:
    omega: float = 0.5
    tol: float = 1e-8
    max_iter: int = 200
    alpha: float | None = None
    alpha_safety: float = 1.25
    linear_solver_tol: float = 1e-10

    def __post_init__(self) -> None:
        if not 0 < self.omega <= 1:
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.alpha_safety < 1:
            raise ValueError("alpha_safety must be >= 1")


def solve_hjb_calibrated(problem: MFGProblem, g_traj: FieldTrajectory, alpha: float, opts: PicardOptions,
                         max_rounds: int = 30) -> tuple[FieldTrajectory, float]:
    """Backward solve with ``alpha`` raised until it dominates every visited drift."""
    cfg = HJBConfig(alpha=alpha, linear_solver_tol=opts.linear_solver_tol)
    for _ in range(max_rounds):
        u = solve_backward(problem.uT, g_traj, problem.params, cfg)
        if opts.alpha is not None:
            return u, cfg.alpha
        need = required_alpha(problem.params, u)
        if need <= cfg.alpha:
            return u, cfg.alpha
        cfg = cfg.with_alpha(opts.alpha_safety * need)
    raise RuntimeError("dissipation calibration did not settle")


def _dump_iterate(dump_dir: str | Path | None, m_traj: FieldTrajectory, it: int) -> None:
    if dump_dir is None:
        return
    path = Path(dump_dir)
    path.mkdir(parents=True, exist_ok=True)
    write_field_dump(path / f"m_iterate_{it:04d}.mfgf", m_traj)


def picard_solve(problem: MFGProblem, omega: float = 0.5, tol: float = 1e-8, max_iter: int = 200, *,
                 options: PicardOptions | None = None, warm_start: MFGSolution | None = None,
                 dump_dir: str | Path | None = None) -> MFGSolution:
    """Damped fixed-point iteration between the HJB and Fokker-Planck solvers.

    Each sweep solves the HJB equation against ``g_eps[m_k]``, transports
    ``m0`` with the new drift to get ``m~`` and damps
    ``m_{k+1} = (1 - omega) m_k + omega m~``.  It stops once both sup-norm
    updates fall below ``tol``.  If ``max_iter`` sweeps are not enough,
    ``omega`` is halved once and up to ``max_iter`` further sweeps run.

    The returned density is ``m~`` from the last sweep, i.e. the exact
    discrete transport of ``m0`` by the returned ``u``.
    """
    opts = options or PicardOptions(omega=omega, tol=tol, max_iter=max_iter)
    grid = problem.grid
    if warm_start is not None:
        m_k = warm_start.m_traj
        u_k: FieldTrajectory | None = warm_start.u_traj
        alpha = warm_start.alpha if opts.alpha is None else opts.alpha
    else:
        m_k = FieldTrajectory.constant_in_time(problem.m0)
        u_k = None
        alpha = opts.alpha if opts.alpha is not None else 0.0
    if opts.alpha is None and alpha == 0.0:
        alpha = opts.alpha_safety * required_alpha(problem.params, FieldTrajectory.constant_in_time(problem.uT))

    report = IterationReport()
    w = opts.omega
    halved = False
    budget = opts.max_iter
    it = 0
    u_new = m_tilde = None
    while it < budget:
        try:
            g = g_eps_trajectory(m_k, problem.eps)
        except PositivityError as exc:
            _dump_iterate(dump_dir, m_k, it)
            raise PicardPositivityError(str(exc), it, m_k, exc.frame) from exc
        u_new, alpha = solve_hjb_calibrated(problem, g, alpha, opts)
        m_tilde = solve_forward(problem.m0, u_new, problem.params, alpha,
                                linear_solver_tol=opts.linear_solver_tol)
        m_next = FieldTrajectory(grid, (1.0 - w) * m_k.frames + w * m_tilde.frames)
        du = float("inf") if u_k is None else float(np.max(np.abs(u_new.frames - u_k.frames)))
        dm = float(np.max(np.abs(m_next.frames - m_k.frames)))
        report.u_updates.append(du)
        report.m_updates.append(dm)
        report.omegas.append(w)
        report.alphas.append(alpha)
        logger.debug("picard it=%d du=%.3e dm=%.3e omega=%.3g alpha=%.4g", it, du, dm, w, alpha)
        u_k, m_k = u_new, m_next
        it += 1
        if du <= opts.tol and dm <= opts.tol:
            report.converged = True
            break
        if it == budget and not halved:
            halved = True
            w *= 0.5
            budget += opts.max_iter
            logger.info("Picard did not converge in %d sweeps; halving omega to %g", opts.max_iter, w)

    sol = MFGSolution(u_new, m_tilde, problem.eps, alpha, report)
    report.hjb_residual, report.fp_residual = pde_residuals(sol, problem)
    if not report.converged:
        logger.warning("Picard iteration not converged (last updates du=%.3e dm=%.3e)",
                       report.u_updates[-1], report.m_updates[-1])
    return sol


@dataclass
class ContinuationResult:
    solutions: list[MFGSolution]
    failures: list[tuple[float, str]]

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self) -> int:
        return len(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]

    @property
    def ok(self) -> bool:
        return not self.failures


def eps_continuation(problem_template: MFGProblem, schedule: EpsSchedule | list[float], omega: float = 0.5,
                     tol: float = 1e-8, max_iter: int = 200, *, options: PicardOptions | None = None,
                     warm: bool = True) -> ContinuationResult:
    """Solve along a decreasing ``eps`` schedule, warm-starting each solve from the previous one."""
    if not isinstance(schedule, EpsSchedule):
        schedule = EpsSchedule(tuple(schedule))
    opts = options or PicardOptions(omega=omega, tol=tol, max_iter=max_iter)
    sols: list[MFGSolution] = []
    failures: list[tuple[float, str]] = []
    prev = None
    for eps in schedule:
        problem = problem_template.with_eps(eps)
        try:
            sol = picard_solve(problem, options=opts, warm_start=prev if warm else None)
        except Exception as exc:  # recorded, continuation stops
            failures.append((eps, f"{type(exc).__name__}: {exc}"))
            break
        sols.append(sol)
        if not sol.report.converged:
            failures.append((eps, "Picard iteration not converged"))
            break
        prev = sol
    return ContinuationResult(sols, failures)


def _st_l2(r: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(grid.dt * grid.cell_volume * np.sum(r**2)))


def pde_residuals(solution: MFGSolution, problem: MFGProblem) -> tuple[float, float]:
    """Space-time L2 residuals of both equations, centred in time and space on interior levels."""
    grid = solution.grid
    if grid.shape != problem.grid.shape or grid.nt != problem.grid.nt:
        raise ValueError("solution and problem grids differ")
    if grid.nt < 2:
        return 0.0, 0.0
    u, m = solution.u_traj.frames, solution.m_traj.frames
    coords = grid.coords()
    h, dt = grid.h, grid.dt
    r_hjb = np.empty((grid.nt - 1, *grid.shape))
    r_fp = np.empty_like(r_hjb)
    for k, n in enumerate(range(1, grid.nt)):
        du = central_diff(u[n], h, grid.d)
        b = problem.params.DpH(coords, du)
        g = g_eps_array(m[n], solution.eps, n)
        r_hjb[k] = (-(u[n + 1] - u[n - 1]) / (2 * dt) + problem.params.H(coords, du)
                    - laplacian_array(u[n], h, grid.d) - g)
        r_fp[k] = ((m[n + 1] - m[n - 1]) / (2 * dt) - central_div(b * m[n], h, grid.d)
                   - laplacian_array(m[n], h, grid.d))
    return _st_l2(r_hjb, grid), _st_l2(r_fp, grid)


__all__ = [
    "ContinuationResult", "IterationReport", "MFGProblem", "MFGSolution", "PicardOptions",
    "PicardPositivityError", "eps_continuation", "normalized_density", "pde_residuals",
    "picard_solve",
]
