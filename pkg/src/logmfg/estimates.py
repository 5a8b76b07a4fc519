"""Numerical witnesses for the a priori estimates: duality, adjoint norms, Lipschitz sweeps.

Every constant reported here is fitted: it is the smallest value that makes
the corresponding inequality hold on the rows that were actually computed.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fokker_planck import AdjointRun, adjoint_energy, solve_adjoint
from .grid import central_diff, central_div, integrate, laplacian_array, lp_norm
from .hjb import drift_array, sup_gradient
from .log_coupling import EpsSchedule, g_eps_array, g_norm_linf_lp, inverse_mass
from .mfg import MFGProblem, MFGSolution, PicardOptions, eps_continuation


def default_probe(solution: MFGSolution) -> tuple[tuple[int, ...], int]:
    """Cell of ``max |u(., 0)|`` and ``tau = 0``."""
    u0 = solution.u_traj.frames[0]
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(np.abs(u0))), u0.shape)), 0


def _adjoint(solution: MFGSolution, problem: MFGProblem, x0, tau: int) -> AdjointRun:
    return solve_adjoint(x0, tau, solution.u_traj, problem.params, solution.alpha)


def _integrand_frames(solution: MFGSolution, problem: MFGProblem, levels) -> tuple[np.ndarray, np.ndarray]:
    """``D_pH.Du - H + g`` and ``H`` at the requested levels."""
    grid = solution.grid
    coords = grid.coords()
    dual, ham = [], []
    for n in levels:
        u = solution.u_traj.frames[n]
        du = central_diff(u, grid.h, grid.d)
        b = problem.params.DpH(coords, du)
        H = problem.params.H(coords, du)
        g = g_eps_array(solution.m_traj.frames[n], solution.eps, n)
        dual.append(np.sum(b * du, axis=0) - H + g)
        ham.append(H)
    return np.array(dual), np.array(ham)


def representation_check(solution: MFGSolution, problem: MFGProblem, x0=None, tau: int | None = None,
                         run: AdjointRun | None = None) -> float:
    """``|u(x0, tau) - [int uT rho(T) + int_tau^T int (D_pH.Du - H + g) rho]|``.

    Space integrals use the grid quadrature and the time integral the
    left-endpoint rule over levels ``tau..nt-1``.  The pairing is exact in
    space, so the residual measures time discretisation only (first order).
    """
    dx0, dtau = default_probe(solution)
    x0 = dx0 if x0 is None else tuple(int(i) for i in np.atleast_1d(x0))
    tau = dtau if tau is None else tau
    grid = solution.grid
    if not 0 <= tau < grid.nt:
        raise ValueError(f"tau must satisfy 0 <= tau < nt = {grid.nt}, got {tau}")
    run = run or _adjoint(solution, problem, x0, tau)
    dual, _ = _integrand_frames(solution, problem, range(tau, grid.nt))
    rho = run.rho_traj.frames
    running = grid.dt * sum(integrate(dual[k] * rho[k], grid) for k in range(len(dual)))
    terminal = integrate(problem.uT.values * rho[-1], grid)
    return abs(float(solution.u_traj.frames[tau][x0]) - (terminal + running))


def h_rho_pairing(solution: MFGSolution, problem: MFGProblem, x0=None, tau: int | None = None,
                  run: AdjointRun | None = None) -> float:
    """``int_tau^T int H(x, Du) rho`` (left-endpoint rule in time)."""
    dx0, dtau = default_probe(solution)
    x0 = dx0 if x0 is None else x0
    tau = dtau if tau is None else tau
    grid = solution.grid
    run = run or _adjoint(solution, problem, x0, tau)
    _, ham = _integrand_frames(solution, problem, range(tau, grid.nt))
    rho = run.rho_traj.frames
    return float(grid.dt * sum(integrate(ham[k] * rho[k], grid) for k in range(len(ham))))


def rho_l1lq_norm(run: AdjointRun, q: float) -> float:
    """``int_tau^T ||rho||_{L^q}``; right-endpoint rule, so the Dirac frame is not weighted."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    grid = run.rho_traj.grid
    return float(sum(grid.dt * lp_norm(fr, q, grid) for fr in run.rho_traj.frames[1:]))


def hopf_cole_residual(solution: MFGSolution, problem: MFGProblem, include_eps_term: bool = False) -> float:
    """Space-time L2 norm of ``v_t - D_pH.Dv - div(D_pH) - |Dv|^2 - Lap v`` for ``v = ln(m + eps)``.

    For ``eps > 0`` the transformed equation carries the extra term
    ``-(eps / (m + eps)) div(D_pH)`` on the right; ``include_eps_term``
    adds it so the residual measures discretisation error only.
    """
    grid = solution.grid
    if grid.nt < 2:
        raise ValueError("need at least three time levels")
    coords = grid.coords()
    h, dt, eps = grid.h, grid.dt, solution.eps
    m = solution.m_traj.frames
    v = np.array([g_eps_array(fr, eps, n) for n, fr in enumerate(m)])
    acc = 0.0
    for n in range(1, grid.nt):
        b = drift_array(problem.params, coords, solution.u_traj.frames[n], h)
        dv = central_diff(v[n], h, grid.d)
        divb = central_div(b, h, grid.d)
        r = ((v[n + 1] - v[n - 1]) / (2 * dt) - np.sum(b * dv, axis=0) - divb
             - np.sum(dv * dv, axis=0) - laplacian_array(v[n], h, grid.d))
        if include_eps_term:
            r = r + eps / (m[n] + eps) * divb
        acc += dt * integrate(r * r, grid)
    return math.sqrt(acc)


@dataclass(frozen=True)
class InverseMassTrace:
    log_inverse_mass: np.ndarray
    rates: np.ndarray
    drift_sq_sup: np.ndarray
    constant: float


def inverse_mass_trace(solution: MFGSolution, problem: MFGProblem) -> InverseMassTrace:
    """``ln int 1/(m + eps)`` per level, its difference quotients, and the smallest ``C`` with
    ``rate_n <= C (|| |D_pH|^2 ||_inf + 1)`` where the drift is the one driving step ``n -> n+1``."""
    grid = solution.grid
    coords = grid.coords()
    trace = np.array([math.log(inverse_mass(fr, solution.eps, grid)) for fr in solution.m_traj.frames])
    rates = np.diff(trace) / grid.dt
    bsq = np.array([float(np.max(np.sum(drift_array(problem.params, coords, u, grid.h) ** 2, axis=0)))
                    for u in solution.u_traj.frames[1:]])
    C = float(max(0.0, np.max(rates / (bsq + 1.0)))) if rates.size else 0.0
    return InverseMassTrace(trace, rates, bsq, C)


# ---------------------------------------------------------------------------
# Young-type bound


def young_bound(C: float, theta: float, tol: float = 1e-10) -> float:
    """Largest ``x >= 0`` with ``x <= C + C x^theta`` for ``0 <= theta < 1``.

    ``f(x) = x - C - C x^theta`` is convex with ``f(0) < 0``, so the set is
    ``[0, x*]``; ``x*`` is bracketed by doubling and bisected, and the lower
    bracket end is returned so that ``f(x*) <= 0``.
    """
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    if not 0 <= theta < 1:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")

    def f(x: float) -> float:
        return x - C - C * x**theta

    lo, hi = C, 2.0 * C + 1.0
    while f(hi) <= 0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-15 * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) <= 0:
            lo = mid
        else:
            hi = mid
    # f(x) carries roundoff of order ulp(x), so the check scales with x
    if f(lo) < -tol * max(1.0, lo):
        raise RuntimeError(f"bisection stalled with f(x) = {f(lo):.3e}")
    return lo


# ---------------------------------------------------------------------------
# sweeps and reports


QUANTITIES = {
    "g_norm": "max over t of ||ln(m + eps)||_{L^p}",
    "sup_grad": "max over t, x of |D u|",
    "h_rho": "int int H(x, Du) rho over [tau, T]",
    "rho_l1lq": "int ||rho||_{L^q} dt over [tau, T]",
    "inverse_mass_max": "max over t of int 1/(m + eps)",
    "inverse_mass_C": "fitted constant of the inverse-mass growth bound",
    "adjoint_energy": "int int |D(rho^(nu/2))|^2 over [tau, T]",
    "duality_residual": "representation formula residual at (x0, tau)",
    "hopf_cole_residual": "space-time L2 residual of the transformed Fokker-Planck equation",
    "picard_iterations": "Picard sweeps used",
}


@dataclass
class EstimateReport:
    rows: list[dict] = field(default_factory=list)
    constants: dict[str, dict[str, float]] = field(default_factory=dict)
    failures: list[tuple[float, str]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path: str | Path) -> Path:
        """Long format, one row per ``(eps, grid, quantity)``; a ``.columns.txt`` manifest sits alongside."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "d", "n", "nt", "T", "quantity", "value"])
            for r in self.rows:
                for q in QUANTITIES:
                    if q in r:
                        w.writerow([repr(r["eps"]), r["d"], r["n"], r["nt"], repr(r["T"]), q, repr(float(r[q]))])
            for name, fit in self.constants.items():
                for key, val in fit.items():
                    w.writerow(["", "", "", "", "", f"fit:{name}:{key}", repr(float(val))])
        manifest = path.with_suffix(".columns.txt")
        with open(manifest, "w") as fh:
            fh.write("eps\tregularisation parameter\n")
            fh.write("d, n, nt, T\tgrid dimension, cells per axis, time steps, horizon\n")
            fh.write("quantity\tname of the reported quantity (below) or fit:<inequality>:<field>\n")
            fh.write("value\tfloating-point value\n\n")
            for q, desc in QUANTITIES.items():
                fh.write(f"{q}\t{desc}\n")
        return path


def fit_constant(lhs: np.ndarray, rhs: np.ndarray) -> dict[str, float]:
    """Smallest ``C`` with ``lhs <= C * rhs`` row-wise, plus the mean relative slack at that ``C``."""
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    if np.any(rhs <= 0):
        raise ValueError("fit denominators must be positive")
    C = float(max(0.0, np.max(lhs / rhs)))
    slack = (C * rhs - lhs) / np.where(C * rhs > 0, C * rhs, 1.0)
    ok = bool(np.all(lhs <= C * rhs * (1 + 1e-12) + 1e-300))
    return {"C": C, "residual": float(np.mean(slack)), "verified": float(ok)}


def estimate_row(solution: MFGSolution, problem: MFGProblem, p: float, q: float, nu: float,
                 x0=None, tau: int | None = None) -> dict:
    grid = solution.grid
    dx0, dtau = default_probe(solution)
    x0 = dx0 if x0 is None else x0
    tau = dtau if tau is None else tau
    run = _adjoint(solution, problem, x0, tau)
    imt = inverse_mass_trace(solution, problem)
    return {
        "eps": solution.eps, "d": grid.d, "n": grid.n, "nt": grid.nt, "T": grid.T,
        "g_norm": g_norm_linf_lp(solution.m_traj, solution.eps, p),
        "sup_grad": sup_gradient(solution.u_traj),
        "h_rho": h_rho_pairing(solution, problem, x0, tau, run),
        "rho_l1lq": rho_l1lq_norm(run, q),
        "inverse_mass_max": float(np.exp(np.max(imt.log_inverse_mass))),
        "inverse_mass_C": imt.constant,
        "adjoint_energy": adjoint_energy(run, nu),
        "duality_residual": representation_check(solution, problem, x0, tau, run),
        "hopf_cole_residual": hopf_cole_residual(solution, problem, include_eps_term=True),
        "picard_iterations": solution.report.iterations,
    }


def fit_report_constants(report: EstimateReport, gamma: float, lam: float = 0.5, b: float = 1.0) -> None:
    G = report.column("sup_grad")
    gn = report.column("g_norm")
    e = 2.0 * (gamma - 1.0)
    Ge = G**e
    report.constants["g_bound"] = fit_constant(gn, 1.0 + Ge)
    report.constants["lipschitz_bound"] = fit_constant(G, 1.0 + gn + gn * Ge)
    report.constants["h_rho_bound"] = fit_constant(report.column("h_rho"),
                                                   1.0 + gn * (1.0 + report.column("rho_l1lq")))
    report.constants["adjoint_energy_bound"] = fit_constant(report.column("adjoint_energy"), 1.0 + Ge)
    report.constants["rho_norm_bound"] = fit_constant(report.column("rho_l1lq"),
                                                      1.0 + G ** (2.0 * lam * (gamma - 1.0) / b))


def lipschitz_sweep(problem_template: MFGProblem, schedule: EpsSchedule | list[float], p: float = 2.0, *,
                    q: float = 2.0, nu: float = 0.5, options: PicardOptions | None = None,
                    x0=None, tau: int | None = None, threads: int = 1) -> EstimateReport:
    """Continuation over ``eps`` with one estimate row per solved ``eps``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if not isinstance(schedule, EpsSchedule):
        schedule = EpsSchedule(tuple(schedule))
    cont = eps_continuation(problem_template, schedule, options=options)
    report = EstimateReport(failures=list(cont.failures),
                            meta={"p": p, "q": q, "nu": nu, "gamma": problem_template.params.gamma})

    def row(sol: MFGSolution) -> dict:
        return estimate_row(sol, problem_template.with_eps(sol.eps), p, q, nu, x0, tau)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            report.rows = list(pool.map(row, cont.solutions))
    else:
        report.rows = [row(s) for s in cont.solutions]
    if report.rows:
        fit_report_constants(report, problem_template.params.gamma)
    return report


def variation(values: np.ndarray) -> float:
    """Relative change ``|a - b| / max(|a|, |b|)`` between the last two entries (0 if both vanish)."""
    a, b = float(values[-2]), float(values[-1])
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale
