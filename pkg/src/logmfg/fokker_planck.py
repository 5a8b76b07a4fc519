"""Forward conservative solver for ``m_t - div(D_pH(x, Du) m) = Delta m`` and its adjoint runs.

The forward step is the exact transpose of the backward HJB step in
:mod:`logmfg.hjb`: with ``S = I - dt (1 - theta) Lap`` and ``E`` the
linearisation of the explicit HJB map at ``u^{n+1}``,

    m^{n+1} = E^T S^{-1} m^n.

``E`` maps constants to constants, so ``E^T`` preserves mass exactly, and its
entries are nonnegative under the same ``alpha``/CFL conditions that make the
HJB map monotone.  This pairing is what makes discrete duality arguments
exact in space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FieldTrajectory, GridSpec, ScalarField, central_diff, central_div, integrate, laplacian_array
from .hjb import check_cfl, drift_array, implicit_diffusion_solve, lf_viscosity

NEGATIVITY_TOL = -1e-12
MASS_TOL = 1e-10


class NegativeDensityError(RuntimeError):
    def __init__(self, minimum: float, level: int | None = None):
        where = "" if level is None else f" at time level {level}"
        super().__init__(f"density dropped to {minimum:.3e}{where}")
        self.minimum = minimum
        self.level = level


@dataclass(frozen=True)
class AdjointRun:
    rho_traj: FieldTrajectory
    x0: tuple[int, ...]
    tau: int

    def __post_init__(self) -> None:
        grid = self.rho_traj.grid
        if self.rho_traj.start != self.tau:
            raise ValueError("adjoint trajectory must start at level tau")
        for k, fr in enumerate(self.rho_traj.frames):
            if np.min(fr) < NEGATIVITY_TOL:
                raise ValueError(f"adjoint frame {k + self.tau} is negative")
            if abs(integrate(fr, grid) - 1.0) > MASS_TOL:
                raise ValueError(f"adjoint frame {k + self.tau} does not have unit mass")


def fp_explicit_apply(sigma: np.ndarray, b: np.ndarray, alpha: float, grid: GridSpec, dt: float) -> np.ndarray:
    """``E^T sigma = sigma + dt (div_c(b sigma) + theta Lap sigma)``."""
    theta = lf_viscosity(alpha, grid.h)
    return sigma + dt * (central_div(b * sigma, grid.h, grid.d) + theta * laplacian_array(sigma, grid.h, grid.d))


def fp_explicit_matrix(params, u: ScalarField, alpha: float, dt: float) -> np.ndarray:
    """Dense matrix of the explicit Fokker-Planck map at drift ``D_pH(x, D_c u)``."""
    grid = u.grid
    b = drift_array(params, grid.coords(), u.values, grid.h)
    size = grid.n**grid.d
    A = np.empty((size, size))
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        A[:, j] = fp_explicit_apply(e.reshape(grid.shape), b, alpha, grid, dt).ravel()
    return A


def _check_alpha(b: np.ndarray, alpha: float) -> None:
    speed = float(np.max(np.abs(b))) if b.size else 0.0
    if speed > alpha * (1.0 + 1e-12):
        raise ValueError(f"dissipation alpha = {alpha:.4g} below drift component {speed:.4g}; positivity not guaranteed")


def _step(m: np.ndarray, u_next: np.ndarray, params, coords: np.ndarray, alpha: float, grid: GridSpec,
          dt: float, source: np.ndarray | None, tol: float) -> np.ndarray:
    check_cfl(alpha, grid, dt)
    theta = lf_viscosity(alpha, grid.h)
    b = drift_array(params, coords, u_next, grid.h)
    _check_alpha(b, alpha)
    sigma = implicit_diffusion_solve(m, dt * (1.0 - theta), grid, tol)
    # the exact inverse is entrywise positive; negative entries are FFT roundoff
    np.maximum(sigma, 0.0, out=sigma)
    out = fp_explicit_apply(sigma, b, alpha, grid, dt)
    if source is not None:
        out = out + dt * source
    return out


def step_forward(m: ScalarField, u_frame: ScalarField, params, dt: float, alpha: float,
                 source: ScalarField | None = None, linear_solver_tol: float = 1e-10) -> ScalarField:
    """Advance ``m`` by one step using the drift of ``u_frame`` (the HJB value at the new level)."""
    if m.grid != u_frame.grid:
        raise ValueError("m and u live on different grids")
    if np.min(m.values) < NEGATIVITY_TOL:
        raise NegativeDensityError(float(np.min(m.values)))
    grid = m.grid
    out = _step(m.values, u_frame.values, params, grid.coords(), alpha, grid, dt,
                None if source is None else source.values, linear_solver_tol)
    if np.min(out) < NEGATIVITY_TOL:
        raise NegativeDensityError(float(np.min(out)))
    return ScalarField(grid, out)


def evolve(rho0: np.ndarray, start: int, u_traj: FieldTrajectory, params, alpha: float,
           source_traj: FieldTrajectory | None = None, linear_solver_tol: float = 1e-10) -> np.ndarray:
    """Frames at levels ``start..nt`` driven by ``u_traj``; raw array result."""
    grid = u_traj.grid
    coords = grid.coords()
    dt = grid.dt
    frames = np.empty((grid.nt - start + 1, *grid.shape))
    frames[0] = rho0
    for k, n in enumerate(range(start, grid.nt)):
        src = None if source_traj is None else source_traj.frames[n + 1 - source_traj.start]
        try:
            frames[k + 1] = _step(frames[k], u_traj.frames[n + 1], params, coords, alpha, grid, dt, src,
                                  linear_solver_tol)
        except ValueError as exc:
            exc.args = (f"{exc.args[0]} (time level {n + 1})", *exc.args[1:])
            raise
        if not np.all(np.isfinite(frames[k + 1])):
            raise NegativeDensityError(float("nan"), n + 1)
        lowest = float(np.min(frames[k + 1]))
        if lowest < NEGATIVITY_TOL:
            raise NegativeDensityError(lowest, n + 1)
    return frames


def solve_forward(m0: ScalarField, u_traj: FieldTrajectory, params, alpha: float,
                  source_traj: FieldTrajectory | None = None, linear_solver_tol: float = 1e-10) -> FieldTrajectory:
    if np.min(m0.values) < 0:
        raise ValueError("initial density must be nonnegative")
    if abs(integrate(m0) - 1.0) > MASS_TOL:
        raise ValueError(f"initial density has mass {integrate(m0):.12f}, expected 1")
    if u_traj.grid.shape != m0.grid.shape or len(u_traj) != m0.grid.nt + 1:
        raise ValueError("u trajectory does not match the density grid")
    frames = evolve(m0.values, 0, u_traj, params, alpha, source_traj, linear_solver_tol)
    return FieldTrajectory(m0.grid, frames)


def grid_delta(grid: GridSpec, x0) -> np.ndarray:
    """Unit-mass single-cell datum ``1/h^d`` at cell ``x0``."""
    idx = tuple(int(i) for i in np.atleast_1d(x0))
    if len(idx) != grid.d or any(not 0 <= i < grid.n for i in idx):
        raise ValueError(f"cell index {x0} outside the grid")
    rho = np.zeros(grid.shape)
    rho[idx] = 1.0 / grid.cell_volume
    return rho


def solve_adjoint(x0, tau: int, u_traj: FieldTrajectory, params, alpha: float,
                  linear_solver_tol: float = 1e-10) -> AdjointRun:
    """Adjoint density started from the grid delta at ``(x0, tau)`` and evolved to ``T``."""
    grid = u_traj.grid
    if not 0 <= tau < grid.nt:
        raise ValueError(f"tau must satisfy 0 <= tau < nt = {grid.nt}, got {tau}")
    rho0 = grid_delta(grid, x0)
    frames = evolve(rho0, tau, u_traj, params, alpha, None, linear_solver_tol)
    idx = tuple(int(i) for i in np.atleast_1d(x0))
    return AdjointRun(FieldTrajectory(grid, frames, start=tau), idx, tau)


def adjoint_energy(run: AdjointRun, nu: float) -> float:
    """``int_tau^T int |D(rho^(nu/2))|^2`` by central differences.

    Time quadrature is the right-endpoint rule over levels ``tau+1..nt``,
    which leaves out the Dirac frame itself.
    """
    if not 0 < nu < 1:
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    grid = run.rho_traj.grid
    total = 0.0
    for fr in run.rho_traj.frames[1:]:
        w = np.where(fr > 0, np.maximum(fr, 0.0) ** (0.5 * nu), 0.0)
        dw = central_diff(w, grid.h, grid.d)
        total += grid.dt * integrate(np.sum(dw**2, axis=0), grid)
    return total
