"""Manufactured solutions for the two transport solvers and their observed orders.

Both problems are one-dimensional with ``a = 1`` and ``V = 0``:

* HJB: ``u* = cos(2 pi x) (1 + t)`` with the source ``g`` that makes it exact;
* Fokker-Planck: ``m* = 1 + cos(2 pi x) e^(-t) / 2`` under the frozen drift of
  ``u = 0.3 sin(2 pi x)`` plus the matching source.

Spatial orders use ``dt ~ h^2`` so the time error scales like ``h^2`` as well.
Temporal orders compare against a same-grid run with a much smaller ``dt``,
which removes the spatial error from the differences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fokker_planck import solve_forward
from .grid import FieldTrajectory, GridSpec, ScalarField, central_diff
from .hamiltonian import HamiltonianParams, eval_DppH
from .hjb import HJBConfig, solve_backward

TWO_PI = 2.0 * math.pi
FROZEN_AMPLITUDE = 0.3


def _params(gamma: float) -> HamiltonianParams:
    return HamiltonianParams.model(1, gamma)


def hjb_exact(x: np.ndarray, t: float) -> np.ndarray:
    return np.cos(TWO_PI * x) * (1.0 + t)


def hjb_source(params: HamiltonianParams, x: np.ndarray, t: float) -> np.ndarray:
    """``-u_t + H(x, u_x) - u_xx`` at the manufactured ``u``."""
    ut = np.cos(TWO_PI * x)
    ux = -TWO_PI * np.sin(TWO_PI * x) * (1.0 + t)
    uxx = -TWO_PI**2 * np.cos(TWO_PI * x) * (1.0 + t)
    return -ut + params.H(x[None], ux[None]) - uxx


def fp_exact(x: np.ndarray, t: float) -> np.ndarray:
    return 1.0 + 0.5 * np.cos(TWO_PI * x) * math.exp(-t)


def _frozen_gradients(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ux = FROZEN_AMPLITUDE * TWO_PI * np.cos(TWO_PI * x)
    uxx = -FROZEN_AMPLITUDE * TWO_PI**2 * np.sin(TWO_PI * x)
    return ux, uxx


def fp_source(params: HamiltonianParams, x: np.ndarray, t: float) -> np.ndarray:
    """``m_t - (b m)_x - m_xx`` with ``b = D_pH(x, u_x)`` for the frozen ``u``."""
    e = math.exp(-t)
    m = fp_exact(x, t)
    mt = -0.5 * np.cos(TWO_PI * x) * e
    mx = -0.5 * TWO_PI * np.sin(TWO_PI * x) * e
    mxx = -0.5 * TWO_PI**2 * np.cos(TWO_PI * x) * e
    ux, uxx = _frozen_gradients(x)
    b = params.DpH(x[None], ux[None])[0]
    bx = eval_DppH(params, x[None], ux[None])[0, 0] * uxx
    return mt - (bx * m + b * mx) - mxx


def _alpha(params: HamiltonianParams, grid: GridSpec, u_frames: np.ndarray, safety: float = 1.25) -> float:
    x = grid.coords()
    peak = max(float(np.max(np.abs(params.DpH(x, central_diff(fr, grid.h, 1))))) for fr in u_frames)
    return safety * peak


def hjb_run(n: int, nt: int, T: float = 0.5, gamma: float = 1.2) -> tuple[GridSpec, FieldTrajectory]:
    grid = GridSpec(1, n, nt, T)
    params = _params(gamma)
    x = grid.coords()[0]
    t = grid.times()
    g = FieldTrajectory(grid, np.array([hjb_source(params, x, tn) for tn in t]))
    alpha = _alpha(params, grid, np.array([hjb_exact(x, tn) for tn in t]))
    u = solve_backward(ScalarField(grid, hjb_exact(x, T)), g, params, HJBConfig(alpha=alpha))
    return grid, u


def fp_run(n: int, nt: int, T: float = 0.5, gamma: float = 1.2) -> tuple[GridSpec, FieldTrajectory]:
    grid = GridSpec(1, n, nt, T)
    params = _params(gamma)
    x = grid.coords()[0]
    frozen = FROZEN_AMPLITUDE * np.sin(TWO_PI * x)
    u_traj = FieldTrajectory(grid, np.broadcast_to(frozen, (nt + 1, n)))
    src = FieldTrajectory(grid, np.array([fp_source(params, x, tn) for tn in grid.times()]))
    alpha = _alpha(params, grid, frozen[None])
    m = solve_forward(ScalarField(grid, fp_exact(x, 0.0)), u_traj, params, alpha, source_traj=src)
    return grid, m


def _sup_error(grid: GridSpec, traj: FieldTrajectory, exact) -> float:
    x = grid.coords()[0]
    return float(max(np.max(np.abs(fr - exact(x, t))) for fr, t in zip(traj.frames, grid.times())))


EQUATIONS = {
    "hjb": (hjb_run, hjb_exact, 0),
    "fp": (fp_run, fp_exact, -1),
}


def observed_orders(sizes, errors) -> list[float]:
    """``log(e_k / e_{k+1}) / log(s_{k+1} / s_k)`` for consecutive refinement levels."""
    return [math.log(errors[k] / errors[k + 1]) / math.log(sizes[k + 1] / sizes[k])
            for k in range(len(errors) - 1)]


@dataclass
class OrderTable:
    equation: str
    kind: str
    sizes: list[int]
    steps: list[int]
    errors: list[float]
    orders: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.orders:
            refine = self.sizes if self.kind == "space" else self.steps
            self.orders = observed_orders(refine, self.errors)

    @property
    def min_order(self) -> float:
        return min(self.orders)

    def rows(self) -> list[dict]:
        return [{"equation": self.equation, "kind": self.kind, "n": n, "nt": nt, "error": e,
                 "order": "" if k == 0 else self.orders[k - 1]}
                for k, (n, nt, e) in enumerate(zip(self.sizes, self.steps, self.errors))]


def spatial_study(equation: str, sizes=(32, 64, 128), T: float = 0.5, gamma: float = 1.2,
                  dt_factor: float = 0.5) -> OrderTable:
    """Errors against the exact field on ``n`` in ``sizes`` with ``dt = dt_factor h^2``."""
    run, exact, _ = EQUATIONS[equation]
    steps = [max(1, math.ceil(T * n * n / dt_factor)) for n in sizes]
    errs = []
    for n, nt in zip(sizes, steps):
        grid, traj = run(n, nt, T, gamma)
        errs.append(_sup_error(grid, traj, exact))
    return OrderTable(equation, "space", list(sizes), steps, errs)


def temporal_study(equation: str, n: int = 128, steps=(160, 320, 640), T: float = 0.5, gamma: float = 1.2,
                   reference_factor: int = 16) -> OrderTable:
    """Errors at the output level against a same-grid run with ``reference_factor`` times more steps.

    The output level is ``t = 0`` for the backward equation and ``t = T``
    for the forward one.
    """
    run, _, out = EQUATIONS[equation]
    _, ref = run(n, steps[-1] * reference_factor, T, gamma)
    errs = []
    for nt in steps:
        _, traj = run(n, nt, T, gamma)
        errs.append(float(np.max(np.abs(traj.frames[out] - ref.frames[out]))))
    return OrderTable(equation, "time", [n] * len(steps), list(steps), errs)


def write_order_tables(path: str | Path, tables: list[OrderTable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["equation", "kind", "n", "nt", "error", "order"])
        w.writeheader()
        for t in tables:
            w.writerows(t.rows())
    return path
