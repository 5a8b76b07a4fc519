from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from logmfg.estimates import rho_l1lq_norm
from logmfg.fokker_planck import (
    AdjointRun, NegativeDensityError, adjoint_energy, fp_explicit_matrix, grid_delta, solve_adjoint,
    solve_forward, step_forward,
)
from logmfg.grid import FieldTrajectory, GridSpec, ScalarField, integrate
from logmfg.hamiltonian import HamiltonianParams
from logmfg.hjb import linearized_explicit_matrix, required_alpha

P1 = HamiltonianParams.model(1, 1.2)


def _frozen(g: GridSpec, values: np.ndarray) -> FieldTrajectory:
    return FieldTrajectory(g, np.broadcast_to(values, (g.nt + 1, *g.shape)))


@pytest.mark.parametrize("d", [1, 2])
def test_explicit_map_is_transpose_of_hjb_linearisation(d):
    g = GridSpec(d, 8, 10, 1.0)
    x = g.coords()
    params = HamiltonianParams.model(d, 1.2, a="1.0; 0.2 cos" + " 1" * d)
    u = ScalarField(g, 0.3 * np.sin(2 * np.pi * x[0]) + 0.1 * np.cos(4 * np.pi * x[-1]))
    A = fp_explicit_matrix(params, u, 1.5, 0.01)
    J = linearized_explicit_matrix(params, u, 1.5, 0.01)
    assert np.max(np.abs(A - J.T)) <= 1e-14
    np.testing.assert_allclose(A.sum(axis=0), 1.0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, 16, elements=st.floats(-0.3, 0.3)),
       arrays(np.float64, 16, elements=st.floats(0.0, 3.0)))
def test_mass_and_positivity_under_random_drift(u_vals, m_vals):
    g = GridSpec(1, 16, 40, 0.2)
    m_vals = m_vals + 1e-3
    m0 = ScalarField(g, m_vals / integrate(m_vals, g))
    u = _frozen(g, u_vals)
    alpha = max(1e-3, 1.25 * required_alpha(P1, u))
    if g.dt * alpha > g.h:
        return
    m = solve_forward(m0, u, P1, alpha)
    masses = m.frames.sum(axis=1) * g.h
    np.testing.assert_allclose(masses, 1.0, atol=1e-12)
    assert m.frames.min() >= 0.0


def test_forward_input_validation():
    g = GridSpec(1, 8, 4, 1.0)
    u = _frozen(g, np.zeros(8))
    with pytest.raises(ValueError):
        solve_forward(ScalarField.constant(g, 2.0), u, P1, 0.1)
    bad = np.ones(8)
    bad[0], bad[1] = -0.5, 2.5
    with pytest.raises(ValueError):
        solve_forward(ScalarField(g, bad), u, P1, 0.1)


def test_step_forward_rejects_negative_input():
    g = GridSpec(1, 8, 4, 1.0)
    m = np.ones(8)
    m[3] = -1e-6
    with pytest.raises(NegativeDensityError):
        step_forward(ScalarField(g, m), ScalarField.constant(g, 0.0), P1, g.dt, 0.1)


def test_alpha_below_drift_is_refused():
    g = GridSpec(1, 16, 20, 0.1)
    x = g.coords()[0]
    u = _frozen(g, np.sin(2 * np.pi * x))
    with pytest.raises(ValueError, match="positivity"):
        solve_forward(ScalarField.constant(g, 1.0), u, P1, 0.1)


def test_uniform_density_is_stationary_without_drift():
    g = GridSpec(2, 8, 5, 0.5)
    m = solve_forward(ScalarField.constant(g, 1.0), _frozen(g, np.zeros(g.shape)),
                      HamiltonianParams.model(2, 1.2), 0.5)
    np.testing.assert_allclose(m.frames, 1.0, atol=1e-14)


def test_grid_delta():
    g = GridSpec(2, 4, 1, 1.0)
    rho = grid_delta(g, (1, 2))
    assert integrate(rho, g) == pytest.approx(1.0)
    assert rho[1, 2] == 16.0
    with pytest.raises(ValueError):
        grid_delta(g, (4, 0))
    with pytest.raises(ValueError):
        grid_delta(g, (1,))


def test_adjoint_run_validation():
    g = GridSpec(1, 8, 4, 1.0)
    u = _frozen(g, np.zeros(8))
    run = solve_adjoint((3,), 1, u, P1, 0.1)
    assert run.tau == 1 and len(run.rho_traj) == 4 and run.x0 == (3,)
    with pytest.raises(ValueError):
        solve_adjoint((3,), 4, u, P1, 0.1)
    with pytest.raises(ValueError):
        AdjointRun(run.rho_traj, (3,), 0)
    with pytest.raises(ValueError):
        AdjointRun(FieldTrajectory(g, 2 * run.rho_traj.frames, start=1), (3,), 1)


def _heat_kernel_l2_integral(T: float) -> float:
    k = np.arange(-60, 61)
    return quad(lambda t: np.sqrt(np.sum(np.exp(-8 * np.pi**2 * k**2 * t))), 0.0, T, limit=200,
                points=[1e-6, 1e-4, 1e-2])[0]


def test_drift_free_delta_run_matches_heat_kernel():
    T = 0.5
    oracle = _heat_kernel_l2_integral(T)
    errs = []
    for n, nt in ((32, 64), (64, 256)):
        g = GridSpec(1, n, nt, T)
        run = solve_adjoint((n // 2,), 0, _frozen(g, np.zeros(n)), P1, 0.0)
        errs.append(abs(rho_l1lq_norm(run, 2.0) - oracle) / oracle)
    assert errs[1] < 5e-3
    assert errs[1] < errs[0]


def test_adjoint_energy_drift_free_oracle():
    # whole-line heat kernel (T small enough that wrapping is negligible):
    # int_0^T int |d_x K^(1/4)|^2 = c T^(1/4); the right-endpoint rule misses
    # the t^(-3/4) mass on [0, dt], a relative shortfall of (dt/T)^(1/4).
    T = 0.002
    exact = np.sqrt(2 * np.pi) / 2 * (4 * np.pi) ** -0.25 * T**0.25
    for n, nt in ((256, 16), (512, 64), (1024, 256)):
        g = GridSpec(1, n, nt, T)
        run = solve_adjoint((n // 2,), 0, _frozen(g, np.zeros(n)), P1, 0.0)
        assert run.rho_traj.frames.min() >= 0.0
        assert adjoint_energy(run, 0.5) / exact == pytest.approx(1 - nt**-0.25, abs=0.03)
    with pytest.raises(ValueError):
        adjoint_energy(run, 1.0)
