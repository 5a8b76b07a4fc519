"""The ten acceptance checks, shared by ``logmfg verify`` and ``tests/test_acceptance.py``."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import exponents as ex
from .estimates import hopf_cole_residual, representation_check, young_bound
from .fokker_planck import MASS_TOL, NEGATIVITY_TOL, fp_explicit_matrix, solve_adjoint
from .grid import GridSpec, ScalarField, integrate
from .hamiltonian import HamiltonianParams
from .hjb import linearized_explicit_matrix, sup_gradient
from .mfg import MFGProblem, MFGSolution, PicardOptions, eps_continuation, normalized_density, picard_solve
from .mms import spatial_study, temporal_study
from .particles import density_mismatch, empirical_cost, resampling_baseline, simulate
from .problems import constant_problem, constant_solution_u, smooth_problem

REFINEMENT_SIZES = (32, 64, 128)
STEPS_PER_CELL = 4
SMOOTH_OPTIONS = PicardOptions(tol=1e-11, max_iter=400)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _ratios(values) -> list[float]:
    return [values[k] / values[k + 1] for k in range(len(values) - 1)]


@lru_cache(maxsize=8)
def smooth_solution(n: int, nt: int, eps: float = 0.0) -> tuple[MFGProblem, MFGSolution]:
    problem = smooth_problem(n=n, nt=nt, eps=eps)
    return problem, picard_solve(problem, options=SMOOTH_OPTIONS)


def _refinement_ladder():
    return [smooth_solution(n, STEPS_PER_CELL * n) for n in REFINEMENT_SIZES]


# ---------------------------------------------------------------------------


def criterion_1() -> tuple[bool, str]:
    t0 = time.perf_counter()
    problem = constant_problem(d=1, n=64, nt=100, T=0.5, eps=0.0, gamma=1.2)
    sol = picard_solve(problem)
    elapsed = time.perf_counter() - t0
    u_err = float(np.max(np.abs(sol.u_traj.frames - constant_solution_u(problem.grid))))
    m_err = float(np.max(np.abs(sol.m_traj.frames - 1.0)))
    ok = u_err <= 1e-10 and m_err <= 1e-10 and elapsed < 5.0 and sol.report.converged
    return ok, f"u err {u_err:.1e}, m err {m_err:.1e}, {sol.report.iterations} iterations, solve {elapsed:.2f} s"


def _frames_ok(frames: np.ndarray, grid: GridSpec) -> tuple[float, float]:
    mass = max(abs(integrate(fr, grid) - 1.0) for fr in frames)
    return mass, float(np.min(frames))


def criterion_2() -> tuple[bool, str]:
    worst_mass, worst_min, count = 0.0, float("inf"), 0
    cases = []
    c = constant_problem()
    cases.append((c, picard_solve(c)))
    cases.extend(_refinement_ladder())
    grid2 = GridSpec(2, 16, 32, 0.5)
    p2 = MFGProblem(grid2, HamiltonianParams.model(2, 1.2),
                    normalized_density(grid2, lambda x: 1.0 + 0.3 * np.cos(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1])),
                    ScalarField.constant(grid2, 0.0))
    cases.append((p2, picard_solve(p2, options=PicardOptions(tol=1e-9))))
    for problem, sol in cases:
        grid = sol.grid
        runs = [sol.m_traj.frames]
        for frac in (0.1, 0.5, 0.85):
            x0 = (int(frac * grid.n),) * grid.d
            for tau in (0, grid.nt // 2):
                runs.append(solve_adjoint(x0, tau, sol.u_traj, problem.params, sol.alpha).rho_traj.frames)
        for frames in runs:
            mass, low = _frames_ok(frames, grid)
            worst_mass, worst_min = max(worst_mass, mass), min(worst_min, low)
            count += len(frames)
    ok = worst_mass <= MASS_TOL and worst_min >= NEGATIVITY_TOL
    return ok, f"{count} frames, max |mass - 1| {worst_mass:.1e}, min value {worst_min:.1e}"


def criterion_3() -> tuple[bool, str]:
    t0 = time.perf_counter()
    parts, ok = [], True
    for eq in ("hjb", "fp"):
        space = spatial_study(eq, REFINEMENT_SIZES)
        tm = temporal_study(eq, n=REFINEMENT_SIZES[-1])
        ok &= space.min_order >= 1.8 and tm.min_order >= 0.8
        parts.append(f"{eq}: space {', '.join(f'{o:.2f}' for o in space.orders)}; "
                     f"time {', '.join(f'{o:.2f}' for o in tm.orders)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    return ok, "; ".join(parts)


def criterion_4() -> tuple[bool, str]:
    worst = 0.0
    for d in (1, 2):
        grid = GridSpec(d, 8, 16, 0.5)
        params = HamiltonianParams.model(d, 1.2, a="1.0; 0.2 cos" + " 1" * d, V="0.0; 0.1 sin" + " 1" * d)
        x = grid.coords()
        u = ScalarField(grid, 0.4 * np.sin(2 * np.pi * x[0]) + 0.2 * np.cos(2 * np.pi * x[-1]))
        alpha, dt = 2.0, 0.01
        A = fp_explicit_matrix(params, u, alpha, dt)
        J = linearized_explicit_matrix(params, u, alpha, dt)
        worst = max(worst, float(np.max(np.abs(A - J.T))))
    return worst <= 1e-14, f"max |A - J^T| = {worst:.1e} (1-d 8 cells, 2-d 8x8)"


def criterion_5() -> tuple[bool, str]:
    t0 = time.perf_counter()
    c = constant_problem()
    const_r = representation_check(picard_solve(c), c)
    res = [representation_check(sol, prob) for prob, sol in _refinement_ladder()]
    elapsed = time.perf_counter() - t0
    ratios = _ratios(res)
    ok = const_r <= 1e-10 and min(ratios) >= 1.8 and elapsed < 180.0
    return ok, (f"constant {const_r:.1e}; smooth {', '.join(f'{r:.2e}' for r in res)} "
                f"ratios {', '.join(f'{r:.2f}' for r in ratios)}")


LIPSCHITZ_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4)


def criterion_6() -> tuple[bool, str]:
    t0 = time.perf_counter()
    template = smooth_problem(n=128, nt=128, gamma=1.2)
    cont = eps_continuation(template, LIPSCHITZ_SCHEDULE, options=PicardOptions(tol=1e-10, max_iter=400))
    elapsed = time.perf_counter() - t0
    if not cont.ok:
        return False, f"continuation failures {cont.failures}"
    G = [sup_gradient(s.u_traj) for s in cont]
    var = abs(G[-1] - G[-2]) / max(G[-1], G[-2])
    ok = var <= 0.10 and elapsed < 300.0
    return ok, f"sup|Du| {', '.join(f'{g:.5f}' for g in G)}; last-two variation {100 * var:.3f}%"


# -- exponent lemmas --------------------------------------------------------


def _oracle_techlem_holds(d, q, b, lam, kappa, nu) -> bool:
    """Independent recomputation of the lemma relations from (kappa, nu)."""
    two_star = Fraction(2 * d, d - 2)
    inv_a = 1 - kappa + 2 * kappa / (two_star * nu)
    inv_Q = 1 - lam + lam * inv_a
    return (0 < kappa < 1 and 0 < nu < 1 and inv_a <= 1 and inv_a > 0
            and kappa * b / nu <= 1 and inv_Q <= 1 / q and lam <= b)


def oracle_techlem_search(d, q, b, lam, N: int = 48) -> bool:
    """Dense grid ``nu, kappa in {j/N}``: does any pair satisfy every relation?"""
    grid = [Fraction(j, N) for j in range(1, N)]
    return any(_oracle_techlem_holds(d, q, b, lam, k, v) for v in grid for k in grid)


def random_techlem_inputs(rng: random.Random, count: int):
    out = []
    for _ in range(count):
        d = rng.randint(3, 6)
        b = 1 + Fraction(rng.randint(0, 20), 10)
        lam = Fraction(rng.randint(1, 99), 100)
        bound = d * b / (b * d - 2 * lam)
        q = 1 + (bound - 1) * Fraction(rng.randint(0, 98), 100)
        out.append((d, q, b, lam))
    return out


def random_lem61_inputs(rng: random.Random, count: int):
    out = []
    for _ in range(count):
        d = rng.randint(3, 6)
        lam = Fraction(rng.randint(1, 99), 100)
        p = max(Fraction(d) / (2 * lam), Fraction(d)) + Fraction(rng.randint(1, 400), 40)
        out.append((d, lam, p))
    return out


def criterion_7(seed: int = 20260517, count: int = 200) -> tuple[bool, str]:
    t0 = time.perf_counter()
    rng = random.Random(seed)
    fail_a = fail_b = oracle_miss = 0
    for d, q, b, lam in random_techlem_inputs(rng, count):
        w = ex.feasible_techlem(d, q, b, lam)
        if not (w.verify() and _oracle_techlem_holds(d, q, b, lam, w.kappa, w.nu_tilde)):
            fail_a += 1
    for d, lam, p in random_lem61_inputs(rng, count):
        w = ex.feasible_lem61(d, lam, p)
        s = Fraction(2 * d, d - 2)
        indep = (1 / p + 1 / w.q_tilde == Fraction(1, 2) and 0 < w.nu_bar < 1 and 0 < w.theta < 1
                 and 2 / (w.q_tilde * (2 - w.nu_bar)) == 1 - w.theta + 2 * w.theta / (s * w.nu_bar)
                 and 1 < w.b < 2 * lam * p / d)
        if not (w.verify() and indep):
            fail_b += 1
    rejected = total_bad = 0
    for _ in range(40):
        d = rng.randint(3, 6)
        b = 1 + Fraction(rng.randint(0, 20), 10)
        lam = Fraction(rng.randint(1, 99), 100)
        q = d * b / (b * d - 2 * lam) + Fraction(rng.randint(0, 20), 10)
        total_bad += 1
        try:
            ex.feasible_techlem(d, q, b, lam)
        except ex.PreconditionError:
            rejected += 1
        if oracle_techlem_search(d, q, b, lam, N=24):
            oracle_miss += 1
        lam2 = Fraction(rng.randint(1, 99), 100)
        p = max(Fraction(d) / (2 * lam2), Fraction(d)) - Fraction(rng.randint(0, 20), 10)
        total_bad += 1
        try:
            ex.feasible_lem61(d, lam2, p)
        except ex.PreconditionError:
            rejected += 1
    for bad in ((2, 1, 1, Fraction(1, 2)), (3, 1, 1, Fraction(1))):
        total_bad += 1
        try:
            ex.feasible_techlem(*bad)
        except ex.PreconditionError:
            rejected += 1
    elapsed = time.perf_counter() - t0
    ok = fail_a == 0 and fail_b == 0 and rejected == total_bad and oracle_miss == 0 and elapsed < 30.0
    return ok, (f"{count}+{count} witnesses, failures {fail_a}/{fail_b}; rejected {rejected}/{total_bad} "
                f"violating inputs; oracle found none for violating inputs: {oracle_miss == 0}")


# -- Young bound ------------------------------------------------------------


def _bisection_oracle(f, lo: float, hi: float) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def criterion_8() -> tuple[bool, str]:
    golden = (3.0 + math.sqrt(5.0)) / 2.0
    oracle = _bisection_oracle(lambda x: x - 1.0 - math.sqrt(x), 1.0, 10.0)
    got = young_bound(1.0, 0.5)
    close = abs(got - oracle) <= 1e-10 and abs(got - golden) <= 1e-10
    Cs = np.linspace(1.0, 10.0, 10)
    thetas = np.linspace(0.0, 0.9, 10)
    table = np.array([[young_bound(float(C), float(t)) for t in thetas] for C in Cs])
    mono = bool(np.all(np.diff(table, axis=0) > 0) and np.all(np.diff(table, axis=1) >= 0))
    return close and mono, f"x*(1, 1/2) = {got:.12f} (oracle {oracle:.12f}); monotone on 10x10 grid: {mono}"


def criterion_9() -> tuple[bool, str]:
    c = constant_problem()
    const_r = hopf_cole_residual(picard_solve(c), c)
    res = [hopf_cole_residual(sol, prob) for prob, sol in _refinement_ladder()]
    ratios = _ratios(res)
    ok = const_r <= 1e-10 and min(ratios) >= 1.8
    return ok, (f"constant {const_r:.1e}; smooth {', '.join(f'{r:.2e}' for r in res)} "
                f"ratios {', '.join(f'{r:.2f}' for r in ratios)}")


def criterion_10(N: int = 100_000, seed: int = 11) -> tuple[bool, str]:
    t0 = time.perf_counter()
    problem, sol = smooth_solution(64, 64)
    ens = simulate(sol, problem, N, seed)
    mismatch = float(density_mismatch(ens, sol.m_traj)[-1])
    baseline = resampling_baseline(sol.m_traj.frames[-1], sol.grid, N, seed)
    cost = empirical_cost(ens, sol, problem)
    budget = 3.0 * cost.stderr + sol.grid.h + sol.grid.dt
    elapsed = time.perf_counter() - t0
    ok = mismatch <= 2.0 * baseline and cost.gap <= budget and elapsed < 120.0
    return ok, (f"mismatch {mismatch:.4f} vs baseline {baseline:.4f}; cost {cost.mean:.6f} vs u {cost.reference:.6f} "
                f"(gap {cost.gap:.1e}, budget {budget:.1e})")


CRITERIA = {
    1: ("constant-solution exactness", criterion_1),
    2: ("conservation and positivity", criterion_2),
    3: ("MMS convergence orders", criterion_3),
    4: ("discrete duality", criterion_4),
    5: ("representation formula", criterion_5),
    6: ("eps-uniform Lipschitz witness", criterion_6),
    7: ("exponent lemma witnesses", criterion_7),
    8: ("Young bound", criterion_8),
    9: ("Hopf-Cole residual", criterion_9),
    10: ("particle consistency", criterion_10),
}


def run_criterion(number: int) -> CriterionResult:
    name, fn = CRITERIA[number]
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed criterion, not an aborted suite
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - t0)


def run_all(numbers=None, echo=print) -> list[CriterionResult]:
    out = []
    for k in numbers or CRITERIA:
        res = run_criterion(k)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
