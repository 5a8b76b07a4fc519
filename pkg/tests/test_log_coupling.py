from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logmfg.grid import FieldTrajectory, GridSpec, ScalarField
from logmfg.log_coupling import (
    EpsSchedule, PositivityError, concavity_threshold, g_eps, g_eps_trajectory, g_norm_linf_lp, inverse_mass,
    log_integrability, log_power_second_derivative, low_part_constant,
)

G = GridSpec(1, 16, 3, 1.0)


def test_g_eps_values_and_positivity():
    m = ScalarField(G, np.linspace(0.0, 2.0, 16))
    np.testing.assert_allclose(g_eps(m, 0.5).values, np.log(m.values + 0.5))
    with pytest.raises(PositivityError):
        g_eps(m, 0.0)
    with pytest.raises(ValueError):
        g_eps(m, -1.0)


def test_positivity_error_names_frame():
    frames = np.ones((4, 16))
    frames[2, 5] = -0.5
    with pytest.raises(PositivityError, match="time level 2") as info:
        g_eps_trajectory(FieldTrajectory(G, frames), 0.1)
    assert info.value.frame == 2


@pytest.mark.parametrize("vals", [(), (0.1, 0.1), (0.1, 0.2), (0.1, 0.0), (float("nan"),)])
def test_schedule_validation(vals):
    with pytest.raises(ValueError):
        EpsSchedule(vals)


def test_schedule_iterates():
    assert list(EpsSchedule((1, 0.5, 1e-3))) == [1.0, 0.5, 1e-3]


def test_uniform_density_norms():
    traj = FieldTrajectory.constant_in_time(ScalarField.constant(G, 1.0))
    assert g_norm_linf_lp(traj, 0.1, 2) == pytest.approx(np.log(1.1))
    assert inverse_mass(traj.frame(0), 0.1) == pytest.approx(1 / 1.1)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 6.0))
def test_concavity_threshold_sign_change(p):
    z0 = 1.0 / concavity_threshold(p)
    assert z0 == pytest.approx(np.exp(p - 1.0))
    above = z0 * 1.01
    # numerical second derivative as an independent oracle
    step = 1e-4 * above
    f = lambda z: np.log(z) ** p
    fd = (f(above + step) - 2 * f(above) + f(above - step)) / step**2
    assert fd < 0
    assert log_power_second_derivative(np.array(above), p) == pytest.approx(fd, rel=1e-3)
    if z0 * 0.9 > 1.0:
        assert log_power_second_derivative(np.array(z0 * 0.9), p) > 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=16, max_size=16), st.floats(1e-4, 1.0), st.floats(1.0, 4.0))
def test_integrability_split_is_a_partition(vals, eps, p):
    traj = FieldTrajectory.constant_in_time(ScalarField(G, np.array(vals)))
    li = log_integrability(traj, eps, p)
    direct = np.sum(np.abs(np.log(np.array(vals) + eps)) ** p) * G.h
    np.testing.assert_allclose(li.total, direct, rtol=1e-12)
    assert np.all(li.low >= 0) and np.all(li.high >= 0)
    kappa = low_part_constant(traj, eps, p)
    assert np.isfinite(kappa) and kappa >= 0
