"""Backward IMEX solver for ``-u_t + H(x, Du) = Delta u + g`` on the torus.

One step from level ``n + 1`` to ``n`` reads

    (I - dt (1 - theta) Lap) u^n = u^{n+1} - dt F(u^{n+1}) + dt g^n

with the Lax-Friedrichs numerical Hamiltonian

    F(u) = H(x, (D+u + D-u)/2) - (alpha/2) sum_k (D+_k u - D-_k u)

and ``theta = alpha h / 2``.  The dissipation term equals ``theta Lap u``, so
the scheme borrows that share of the physical viscosity explicitly and
treats the rest implicitly: the update stays second order in space while the
explicit map is monotone whenever ``alpha >= max |D_pH|`` and
``dt d alpha <= h``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .grid import FieldTrajectory, GridSpec, ScalarField, backward_diff, central_diff, forward_diff, laplacian_array


class CFLError(ValueError):
    def __init__(self, msg: str, suggested_dt: float):
        super().__init__(f"{msg}; suggested dt <= {suggested_dt:.6g}")
        self.suggested_dt = suggested_dt


class LinearSolveError(RuntimeError):
    pass


class SolverDivergence(RuntimeError):
    def __init__(self, msg: str, level: int):
        super().__init__(f"{msg} at time level {level}")
        self.level = level


@dataclass(frozen=True)
class HJBConfig:
    alpha: float = 0.0
    linear_solver_tol: float = 1e-10
    scheme: str = "imex-euler"

    def __post_init__(self) -> None:
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.linear_solver_tol <= 1e-6:
            raise ValueError("linear_solver_tol must lie in (0, 1e-6]")
        if self.scheme != "imex-euler":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    def with_alpha(self, alpha: float) -> HJBConfig:
        return replace(self, alpha=float(alpha))


# ---------------------------------------------------------------------------
# shared discrete pieces (also used by the Fokker-Planck solver)


def lf_viscosity(alpha: float, h: float) -> float:
    """Share of the unit viscosity supplied by Lax-Friedrichs dissipation."""
    theta = 0.5 * alpha * h
    if theta > 1.0:
        raise ValueError(f"alpha h / 2 = {theta:.3g} exceeds the unit viscosity; refine the grid")
    return theta


def check_cfl(alpha: float, grid: GridSpec, dt: float) -> None:
    if dt * grid.d * alpha > grid.h * (1.0 + 1e-12):
        raise CFLError(f"explicit step violates dt d alpha <= h (alpha = {alpha:.4g})",
                       grid.h / (grid.d * alpha))


@lru_cache(maxsize=64)
def _laplacian_symbol(n: int, d: int) -> np.ndarray:
    """Eigenvalues of the periodic compact Laplacian times ``h^2`` on the rfft lattice."""
    full = 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n) - 2.0
    half = full[: n // 2 + 1]
    if d == 1:
        return half
    return full[:, None] + half[None, :]


def implicit_diffusion_solve(rhs: np.ndarray, coef: float, grid: GridSpec, tol: float = 1e-10) -> np.ndarray:
    """Solve ``(I - coef Lap) w = rhs`` exactly by discrete Fourier diagonalisation."""
    if coef == 0.0:
        return rhs.copy()
    axes = tuple(range(-grid.d, 0))
    sym = 1.0 - coef * _laplacian_symbol(grid.n, grid.d) / grid.h**2
    w = np.fft.irfftn(np.fft.rfftn(rhs, axes=axes) / sym, s=rhs.shape[-grid.d:], axes=axes)
    resid = w - coef * laplacian_array(w, grid.h, grid.d) - rhs
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if np.max(np.abs(resid)) > tol * scale * (1.0 + 4.0 * grid.d * coef / grid.h**2):
        raise LinearSolveError(f"implicit diffusion residual {np.max(np.abs(resid)):.3e} above tolerance")
    return w


def drift_array(params, coords: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """``D_pH(x, D_c u)`` with the central gradient; shape ``(d, ...)``."""
    return params.DpH(coords, central_diff(u, h, coords.shape[0]))


def numerical_hamiltonian(params, coords: np.ndarray, u: np.ndarray, alpha: float, h: float) -> np.ndarray:
    d = coords.shape[0]
    pf = forward_diff(u, h, d)
    pb = backward_diff(u, h, d)
    return params.H(coords, 0.5 * (pf + pb)) - 0.5 * alpha * np.sum(pf - pb, axis=0)


def explicit_update(params, coords: np.ndarray, u: np.ndarray, alpha: float, grid: GridSpec, dt: float) -> np.ndarray:
    """``u - dt F(u)``: the monotone explicit half of the step."""
    return u - dt * numerical_hamiltonian(params, coords, u, alpha, grid.h)


def explicit_update_jvp(params, coords: np.ndarray, u: np.ndarray, w: np.ndarray, alpha: float,
                        grid: GridSpec, dt: float) -> np.ndarray:
    """Directional derivative of :func:`explicit_update` at ``u`` along ``w``."""
    b = drift_array(params, coords, u, grid.h)
    theta = lf_viscosity(alpha, grid.h)
    dw = central_diff(w, grid.h, grid.d)
    return w - dt * (np.sum(b * dw, axis=0) - theta * laplacian_array(w, grid.h, grid.d))


def linearized_explicit_matrix(params, u: ScalarField, alpha: float, dt: float) -> np.ndarray:
    """Dense Jacobian of the explicit HJB map, built column by column from the JVP."""
    grid = u.grid
    coords = grid.coords()
    size = grid.n**grid.d
    J = np.empty((size, size))
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        J[:, j] = explicit_update_jvp(params, coords, u.values, e.reshape(grid.shape), alpha, grid, dt).ravel()
    return J


# ---------------------------------------------------------------------------
# stepping


def _step(u_next: np.ndarray, g: np.ndarray, params, coords: np.ndarray, cfg: HJBConfig,
          grid: GridSpec, dt: float) -> np.ndarray:
    theta = lf_viscosity(cfg.alpha, grid.h)
    check_cfl(cfg.alpha, grid, dt)
    rhs = explicit_update(params, coords, u_next, cfg.alpha, grid, dt) + dt * g
    return implicit_diffusion_solve(rhs, dt * (1.0 - theta), grid, cfg.linear_solver_tol)


def step_backward(u_next: ScalarField, g_frame: ScalarField, params, cfg: HJBConfig, dt: float) -> ScalarField:
    """One backward IMEX step; returns ``u`` at the earlier time level."""
    if u_next.grid != g_frame.grid:
        raise ValueError("u and g live on different grids")
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = u_next.grid
    out = _step(u_next.values, g_frame.values, params, grid.coords(), cfg, grid, dt)
    if not np.all(np.isfinite(out)):
        raise SolverDivergence("HJB step produced non-finite values", -1)
    return ScalarField(grid, out)


def solve_backward(uT: ScalarField, g_traj: FieldTrajectory, params, cfg: HJBConfig) -> FieldTrajectory:
    grid = uT.grid
    if g_traj.grid.shape != grid.shape or len(g_traj) != grid.nt + 1 or g_traj.start != 0:
        raise ValueError(f"source trajectory has {len(g_traj)} frames, grid needs {grid.nt + 1}")
    coords = grid.coords()
    dt = grid.dt
    frames = np.empty((grid.nt + 1, *grid.shape))
    frames[grid.nt] = uT.values
    for n in range(grid.nt - 1, -1, -1):
        try:
            frames[n] = _step(frames[n + 1], g_traj.frames[n], params, coords, cfg, grid, dt)
        except (LinearSolveError, CFLError) as exc:
            exc.args = (f"{exc.args[0]} (time level {n})", *exc.args[1:])
            raise
        if not np.all(np.isfinite(frames[n])):
            raise SolverDivergence("HJB solve produced non-finite values", n)
    return FieldTrajectory(grid, frames)


def required_alpha(params, u_traj: FieldTrajectory) -> float:
    """``max |D_pH(x, D_c u)|`` over every frame of ``u_traj``."""
    coords = u_traj.grid.coords()
    return float(max(np.max(np.sqrt(np.sum(drift_array(params, coords, fr, u_traj.grid.h) ** 2, axis=0)))
                     for fr in u_traj.frames))


def extract_control(u_traj: FieldTrajectory, params) -> np.ndarray:
    """Optimal feedback ``-D_pH(x, D_c u)`` per frame; shape ``(frames, d, ...)``."""
    coords = u_traj.grid.coords()
    return np.stack([-drift_array(params, coords, fr, u_traj.grid.h) for fr in u_traj.frames])


def sup_gradient(u_traj: FieldTrajectory) -> float:
    grid = u_traj.grid
    grads = central_diff(u_traj.frames, grid.h, grid.d)
    return float(np.max(np.sqrt(np.sum(grads**2, axis=0))))
