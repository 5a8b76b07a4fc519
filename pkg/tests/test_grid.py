from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from logmfg.grid import (
    FieldTrajectory, GridSpec, ScalarField, central_diff, dirichlet_form, gradient, integrate, laplacian,
    lp_norm, read_field_dump, read_particle_dump, write_field_dump, write_particle_dump,
)


@pytest.mark.parametrize("kw", [dict(d=3), dict(n=2), dict(nt=0), dict(T=0.0), dict(T=float("inf"))])
def test_gridspec_rejects_bad_input(kw):
    base = dict(d=1, n=8, nt=4, T=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        GridSpec(**base)


def test_cell_centres_and_steps():
    g = GridSpec(2, 4, 10, 0.5)
    assert g.h == 0.25 and g.dt == 0.05 and g.shape == (4, 4)
    x = g.coords()
    assert x.shape == (2, 4, 4)
    np.testing.assert_allclose(x[0][:, 0], [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(x[1][0], [0.125, 0.375, 0.625, 0.875])
    assert g.refined() == GridSpec(2, 8, 20, 0.5)


def test_fields_are_frozen_and_finite():
    g = GridSpec(1, 8, 2, 1.0)
    f = ScalarField.constant(g, 2.0)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        ScalarField(g, np.full(8, np.nan))
    with pytest.raises(ValueError):
        FieldTrajectory(g, np.zeros((2, 8)))


def test_trajectory_start_offset():
    g = GridSpec(1, 8, 4, 1.0)
    tr = FieldTrajectory(g, np.arange(3 * 8, dtype=float).reshape(3, 8), start=2)
    assert len(tr) == 3
    np.testing.assert_array_equal(tr.frame(3).values, np.arange(8, 16))
    np.testing.assert_allclose(tr.times(), [0.5, 0.75, 1.0])


@pytest.mark.parametrize("d", [1, 2])
def test_derivatives_second_order(d):
    errs = []
    for n in (16, 32, 64):
        g = GridSpec(d, n, 1, 1.0)
        x = g.coords()
        f = ScalarField(g, np.sin(2 * np.pi * x[0]) * (np.cos(2 * np.pi * x[-1]) if d == 2 else 1.0))
        exact_lap = -4 * np.pi**2 * d * f.values
        errs.append(np.max(np.abs(laplacian(f).values - exact_lap)))
    assert errs[0] / errs[1] > 3.8 and errs[1] / errs[2] > 3.9


def test_gradient_modes():
    g = GridSpec(1, 8, 1, 1.0)
    f = ScalarField(g, np.arange(8.0) ** 2)
    c = gradient(f)
    fwd, bwd = gradient(f, "upwind-pair")
    np.testing.assert_allclose(c, 0.5 * (fwd + bwd))
    with pytest.raises(ValueError):
        gradient(f, "spectral")


def test_integrate_and_norms():
    g = GridSpec(2, 16, 1, 1.0)
    x = g.coords()
    assert integrate(ScalarField.constant(g, 3.0)) == pytest.approx(3.0)
    assert abs(integrate(ScalarField(g, np.cos(2 * np.pi * x[0])))) < 1e-14
    f = ScalarField(g, np.full(g.shape, -2.0))
    assert lp_norm(f, 1) == pytest.approx(2.0)
    assert lp_norm(f, np.inf) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        lp_norm(f, 0.5)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 12), elements=st.floats(-10, 10)))
def test_summation_by_parts_is_exact(pair):
    g = GridSpec(1, 12, 1, 1.0)
    f, h = ScalarField(g, pair[0]), ScalarField(g, pair[1])
    lhs = integrate(ScalarField(g, f.values * laplacian(h).values))
    assert dirichlet_form(f, h) == pytest.approx(-lhs, rel=1e-9, abs=1e-7)
    assert dirichlet_form(f, f) >= -1e-12


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-1e3, 1e3)))
def test_central_diff_annihilates_mean(vals):
    g = GridSpec(2, 6, 1, 1.0)
    assert np.allclose(central_diff(vals, g.h, 2).sum(axis=(1, 2)), 0.0, atol=1e-8)


def test_field_dump_roundtrip(tmp_path):
    g = GridSpec(2, 5, 3, 1.0)
    tr = FieldTrajectory(g, np.random.default_rng(0).random((4, 5, 5)))
    write_field_dump(tmp_path / "u.mfgf", tr)
    d, n, data = read_field_dump(tmp_path / "u.mfgf")
    assert (d, n) == (2, 5)
    np.testing.assert_array_equal(data, tr.frames)
    raw = (tmp_path / "u.mfgf").read_bytes()
    assert raw[:4] == b"MFGF"


def test_dump_rejects_wrong_magic(tmp_path):
    pos = np.random.default_rng(1).random((3, 10, 2))
    write_particle_dump(tmp_path / "p.mfgp", pos)
    np.testing.assert_array_equal(read_particle_dump(tmp_path / "p.mfgp"), pos)
    with pytest.raises(ValueError):
        read_field_dump(tmp_path / "p.mfgp")
