from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from logmfg.estimates import (
    QUANTITIES, EstimateReport, default_probe, fit_constant, h_rho_pairing, hopf_cole_residual,
    inverse_mass_trace, lipschitz_sweep, representation_check, rho_l1lq_norm, young_bound,
)
from logmfg.fokker_planck import AdjointRun, solve_adjoint, solve_forward
from logmfg.grid import FieldTrajectory, GridSpec, ScalarField
from logmfg.hjb import required_alpha
from logmfg.mfg import IterationReport, MFGSolution, PicardOptions, picard_solve
from logmfg.problems import constant_problem, smooth_problem

OPTS = PicardOptions(tol=1e-11, max_iter=400)


# -- representation formula --------------------------------------------------


@pytest.mark.parametrize("x0, tau", [(None, None), ((0,), 0), ((17,), 50), ((63,), 99)])
def test_representation_exact_on_constant_problem(constant_case, x0, tau):
    problem, sol = constant_case
    assert representation_check(sol, problem, x0, tau) <= 1e-10


@pytest.mark.parametrize("tau", [100, 150, -1])
def test_representation_needs_nonempty_interval(constant_case, tau):
    problem, sol = constant_case
    with pytest.raises(ValueError):
        representation_check(sol, problem, (3,), tau)


def test_default_probe_is_peak_of_initial_value(smooth_case):
    _, sol = smooth_case
    x0, tau = default_probe(sol)
    assert tau == 0
    assert abs(sol.u_traj.frames[0][x0]) == np.max(np.abs(sol.u_traj.frames[0]))


def test_representation_residual_is_first_order(smooth_case):
    coarse = representation_check(smooth_case[1], smooth_case[0])
    problem = smooth_problem(n=64, nt=256)
    fine = representation_check(picard_solve(problem, options=OPTS), problem)
    assert coarse / fine >= 1.8


# -- pairings and norms -------------------------------------------------------


@pytest.mark.parametrize("tau", [0, 40])
def test_h_rho_constant(constant_case, tau):
    problem, sol = constant_case
    T_minus_tau = problem.grid.T - tau * problem.grid.dt
    assert h_rho_pairing(sol, problem, (5,), tau) == pytest.approx(T_minus_tau, abs=1e-12)


def test_h_rho_nonnegative_and_stable(smooth_case):
    problem, sol = smooth_case
    coarse = h_rho_pairing(sol, problem)
    fine_problem = smooth_problem(n=64, nt=256)
    fine = h_rho_pairing(picard_solve(fine_problem, options=OPTS), fine_problem)
    assert coarse >= 0 and fine >= 0
    assert fine == pytest.approx(coarse, rel=0.05)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 7.0])
def test_rho_norm_uniform(q):
    g = GridSpec(1, 16, 10, 1.0)
    run = AdjointRun(FieldTrajectory(g, np.ones((7, 16)), start=4), (0,), 4)
    assert rho_l1lq_norm(run, q) == pytest.approx(0.6)


def test_rho_norm_q1_is_time_span(smooth_case):
    problem, sol = smooth_case
    run = solve_adjoint((7,), 32, sol.u_traj, problem.params, sol.alpha)
    assert rho_l1lq_norm(run, 1.0) == pytest.approx(problem.grid.T - 32 * problem.grid.dt, abs=1e-12)
    assert rho_l1lq_norm(run, 3.0) > rho_l1lq_norm(run, 2.0) > rho_l1lq_norm(run, 1.0)
    with pytest.raises(ValueError):
        rho_l1lq_norm(run, 0.5)


# -- Hopf-Cole ------------------------------------------------------------------


def test_hopf_cole_constant(constant_case):
    problem, sol = constant_case
    assert hopf_cole_residual(sol, problem) <= 1e-10
    eps_problem = constant_problem(eps=0.2)
    assert hopf_cole_residual(picard_solve(eps_problem), eps_problem) <= 1e-10


def test_hopf_cole_refinement(smooth_case):
    coarse = hopf_cole_residual(smooth_case[1], smooth_case[0])
    problem = smooth_problem(n=64, nt=256)
    fine = hopf_cole_residual(picard_solve(problem, options=OPTS), problem)
    assert coarse / fine >= 1.8


def test_hopf_cole_flags_inconsistent_pair(smooth_case):
    problem, sol = smooth_case
    g = problem.grid
    x = g.coords()[0]
    other_u = FieldTrajectory(g, np.broadcast_to(0.5 * np.sin(2 * np.pi * x), (g.nt + 1, g.n)))
    alpha = 1.25 * required_alpha(problem.params, other_u)
    other_m = solve_forward(problem.m0, other_u, problem.params, alpha)
    mixed = MFGSolution(sol.u_traj, other_m, 0.0, sol.alpha, IterationReport())
    assert hopf_cole_residual(mixed, problem) > 1.0 > 50 * hopf_cole_residual(sol, problem)


def test_hopf_cole_eps_term_vanishes_at_zero(smooth_case):
    problem, sol = smooth_case
    assert hopf_cole_residual(sol, problem, include_eps_term=True) == hopf_cole_residual(sol, problem)


# -- inverse mass -----------------------------------------------------------------


def test_inverse_mass_constant():
    problem = constant_problem(n=16, nt=20, eps=0.1)
    tr = inverse_mass_trace(picard_solve(problem), problem)
    np.testing.assert_allclose(tr.log_inverse_mass, math.log(1 / 1.1), atol=1e-14)
    np.testing.assert_allclose(tr.rates, 0.0, atol=1e-10)
    assert tr.constant <= 1e-10


def test_inverse_mass_constant_finite_on_smooth(smooth_case):
    tr = inverse_mass_trace(smooth_case[1], smooth_case[0])
    assert np.isfinite(tr.constant) and 0.0 <= tr.constant < 1e-8


def test_inverse_mass_constant_grows_with_injected_drift():
    problem = constant_problem(n=64, nt=200)
    g = problem.grid
    x = g.coords()[0]
    fitted = []
    for k in (0.1, 0.2, 0.4, 0.8):
        u = FieldTrajectory(g, np.broadcast_to(k * np.sin(2 * np.pi * x), (g.nt + 1, g.n)))
        alpha = 1.25 * required_alpha(problem.params, u)
        m = solve_forward(problem.m0, u, problem.params, alpha)
        fitted.append(inverse_mass_trace(MFGSolution(u, m, 0.0, alpha, IterationReport()), problem).constant)
    assert all(b > a for a, b in zip(fitted, fitted[1:]))


# -- sweep and report -------------------------------------------------------------


def test_fit_constant_is_minimal():
    fit = fit_constant(np.array([1.0, 3.0, 2.0]), np.array([1.0, 2.0, 4.0]))
    assert fit["C"] == 1.5 and fit["verified"] == 1.0
    with pytest.raises(ValueError):
        fit_constant(np.array([1.0]), np.array([0.0]))


def test_sweep_on_constant_problem(tmp_path):
    template = constant_problem(n=16, nt=20)
    schedule = [0.5, 0.05, 0.005]
    rep = lipschitz_sweep(template, schedule, p=2.0)
    assert not rep.failures and len(rep.rows) == 3
    np.testing.assert_array_equal(rep.column("sup_grad"), 0.0)
    np.testing.assert_allclose(rep.column("g_norm"), np.log1p(schedule), rtol=1e-12)
    for name, fit in rep.constants.items():
        assert np.isfinite(fit["C"]) and np.isfinite(fit["residual"]) and fit["verified"] == 1.0, name
    for row in rep.rows:
        assert all(np.isfinite(v) for v in row.values())
    path = rep.to_csv(tmp_path / "est.csv")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert {r["quantity"] for r in rows} >= set(QUANTITIES)
    assert all(float(r["value"]) == 0.0 for r in rows if r["quantity"] == "sup_grad")
    assert (tmp_path / "est.columns.txt").read_text().count("\n") >= len(QUANTITIES)


def test_sweep_threads_agree():
    template = smooth_problem(n=16, nt=16)
    a = lipschitz_sweep(template, [0.1, 0.01], threads=1)
    b = lipschitz_sweep(template, [0.1, 0.01], threads=2)
    assert a.rows == b.rows


def test_sweep_validates_inputs():
    with pytest.raises(ValueError):
        lipschitz_sweep(constant_problem(n=8, nt=4), [0.1], p=0.5)
    with pytest.raises(ValueError):
        lipschitz_sweep(constant_problem(n=8, nt=4), [0.01, 0.1])


def test_report_column_access():
    rep = EstimateReport(rows=[{"x": 1.0}, {"x": 2.0}])
    np.testing.assert_array_equal(rep.column("x"), [1.0, 2.0])


# -- Young bound ------------------------------------------------------------------


@pytest.mark.parametrize("C", [0.1, 1.0, 7.5])
def test_young_theta_zero(C):
    assert young_bound(C, 0.0) == pytest.approx(2 * C, abs=1e-12)


def test_young_golden_ratio():
    assert young_bound(1.0, 0.5) == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-10)


def test_young_near_one_is_finite_and_larger():
    x = young_bound(1.0, 0.99)
    assert math.isfinite(x) and x >= young_bound(1.0, 0.5)


@pytest.mark.parametrize("C, theta", [(0.0, 0.5), (-1.0, 0.5), (1.0, 1.0), (1.0, -0.1)])
def test_young_rejects(C, theta):
    with pytest.raises(ValueError):
        young_bound(C, theta)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(0.0, 0.99))
def test_young_is_the_largest_feasible_point(C, theta):
    x = young_bound(C, theta)
    # absolute tolerances are only resolvable in float64 for moderate x*
    assume(x <= 1e4)
    f = lambda y: y - C - C * y**theta
    assert -1e-10 <= f(x) <= 0.0
    assert f(x + 1e-6) > 0.0


@settings(max_examples=80, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(0.0, 0.99))
def test_young_bound_relative_accuracy(C, theta):
    x = young_bound(C, theta)
    f = lambda y: y - C - C * y**theta
    assert -1e-12 * x <= f(x) <= 0.0
    assert f(x * (1 + 1e-9)) > 0.0
