from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from logmfg.hamiltonian import (
    FourierSeries, HamiltonianParams, LegendreError, check_assumptions, eval_DppH, eval_DpH, eval_DxH, eval_H,
    legendre_lagrangian, quadratic_params,
)

finite = st.floats(-5, 5, allow_nan=False)


def test_fourier_parse_format_roundtrip():
    s = FourierSeries.parse("1.0; 0.1 cos 1 0; -0.2 sin 0 2", 2)
    assert FourierSeries.parse(s.format(), 2) == s
    x = np.array([[0.25], [0.125]])
    assert s(x)[0] == pytest.approx(1.0 + 0.1 * np.cos(np.pi / 2) - 0.2 * np.sin(np.pi / 2))
    with pytest.raises(ValueError):
        FourierSeries.parse("1.0; 0.1 tan 1", 1)
    with pytest.raises(ValueError):
        FourierSeries.parse("1.0; 0.1 cos 1", 2)


def test_fourier_gradient_matches_finite_differences():
    s = FourierSeries.parse("0.5; 0.3 cos 1 2; 0.2 sin 3 1", 2)
    x = np.array([[0.31], [0.77]])
    step = 1e-6
    for j in range(2):
        e = np.zeros((2, 1))
        e[j] = step
        fd = (s(x + e) - s(x - e)) / (2 * step)
        assert s.grad(x)[j, 0] == pytest.approx(fd[0], rel=1e-7)


def test_params_validation():
    with pytest.raises(ValueError):
        HamiltonianParams.model(1, gamma=0.9)
    with pytest.raises(ValueError):
        HamiltonianParams.model(1, a="0.1; 0.5 cos 1")
    with pytest.raises(ValueError):
        HamiltonianParams(FourierSeries.constant(1, 1.0), FourierSeries.constant(2, 0.0), 1.2)


def test_model_values_and_scalar_input():
    p = HamiltonianParams.model(1, 1.2)
    assert float(eval_H(p, 0.3, 0.0)) == pytest.approx(1.0)
    assert float(eval_H(p, 0.3, 2.0)) == pytest.approx(5.0**0.6)
    assert float(eval_DpH(p, 0.3, 0.0)[0]) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.tuples(finite, finite), st.floats(0, 1), st.floats(0, 1), st.floats(1.0, 2.0))
def test_derivatives_match_finite_differences(pp, x1, x2, gamma):
    params = HamiltonianParams.model(2, gamma, a="1.0; 0.3 cos 1 1", V="0.0; 0.2 sin 1 0")
    x = np.array([[x1], [x2]])
    p = np.array([[pp[0]], [pp[1]]])
    step = 1e-6
    for j in range(2):
        e = np.zeros((2, 1))
        e[j] = step
        fd_p = (eval_H(params, x, p + e) - eval_H(params, x, p - e)) / (2 * step)
        fd_x = (eval_H(params, x + e, p) - eval_H(params, x - e, p)) / (2 * step)
        assert eval_DpH(params, x, p)[j, 0] == pytest.approx(fd_p[0], rel=1e-5, abs=1e-6)
        assert eval_DxH(params, x, p)[j, 0] == pytest.approx(fd_x[0], rel=1e-5, abs=1e-6)
        fd_pp = (eval_DpH(params, x, p + e) - eval_DpH(params, x, p - e)) / (2 * step)
        np.testing.assert_allclose(eval_DppH(params, x, p)[:, j, 0], fd_pp[:, 0], rtol=1e-5, atol=1e-6)


def test_legendre_quadratic_closed_form():
    q = quadratic_params(1)
    v = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(legendre_lagrangian(q, np.full(13, 0.2), v), 0.5 * v**2, atol=1e-12)
    assert float(legendre_lagrangian(q, 0.1, 1.5)) == pytest.approx(1.125)


def test_legendre_at_rest_is_minus_h0():
    p = HamiltonianParams.model(1, 1.2, a="1.0; 0.3 cos 1", V="0.5")
    x = np.linspace(0, 1, 7)
    np.testing.assert_allclose(legendre_lagrangian(p, x, np.zeros(7)), -(p.a(x[None]) + 0.5), atol=1e-12)


@pytest.mark.parametrize("v", [-1.3, -0.2, 0.05, 0.7, 1.1])
def test_legendre_against_scalar_optimiser(v):
    params = HamiltonianParams.model(1, 1.2)
    res = minimize_scalar(lambda p: p * v + float(eval_H(params, 0.0, p)), bounds=(-1e4, 1e4), method="bounded",
                          options={"xatol": 1e-12})
    assert float(legendre_lagrangian(params, 0.0, v)) == pytest.approx(-res.fun, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(finite, finite, st.floats(0, 1))
def test_fenchel_young(p, q, x):
    params = HamiltonianParams.model(1, 1.2, a="1.0; 0.2 cos 1")
    v = -eval_DpH(params, x, q)
    Lv, pstar = legendre_lagrangian(params, x, v, return_momentum=True)
    # equality at the optimal momentum, inequality elsewhere
    assert float(Lv + eval_H(params, x, q)) == pytest.approx(float(-q * v[0]), abs=1e-8)
    assert float(pstar[0]) == pytest.approx(q, abs=1e-6)
    assert float(Lv + eval_H(params, x, p)) >= float(-p * v[0]) - 1e-9


def test_legendre_gamma_one_range():
    params = HamiltonianParams.model(1, 1.0)
    with pytest.raises(LegendreError):
        legendre_lagrangian(params, 0.0, 5.0)


def test_assumptions_model_passes():
    rep = check_assumptions(HamiltonianParams.model(1, 1.2, a="1.0; 0.2 cos 1", V="0.1"))
    assert rep.all_passed, rep.flags
    assert rep.constants["A2_c"] > 0
    assert any("d > 2" in n for n in rep.notes)


@pytest.mark.parametrize("gamma, ok", [(1.2, True), (1.249, True), (1.25, False), (1.5, False), (1.0, False)])
def test_assumption_a5_is_exact(gamma, ok):
    rep = check_assumptions(HamiltonianParams.model(1, gamma), n_x=4, n_radial=21)
    assert rep.passed("A5") is ok


def test_assumption_a1_flags_negative_h():
    rep = check_assumptions(HamiltonianParams.model(1, 1.2, V="-2.0"), n_x=4, n_radial=21)
    assert "A1" in rep.failures()
