"""Calabi-ansatz resolution models.

Two independent oracles anchor this file: the Ricci-flat ODE
(u')^{n-1} u'' = e^{nt} checked pointwise from the closed forms, and the gap
value g = u - e^t checked against direct quadrature of g' with the constant
fixed at +infinity (scipy.integrate.quad, nothing shared with the package's
series/panel evaluator).
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from cscklab.acmodels import (ACResolutionModel, CalabiForms, calabi_resolution,
                              cy_residual, decay_fit, decay_rate, flat_model,
                              identity_deviation, volume_excess_coefficient)
from cscklab.errors import (ConfigurationError, InsufficientDataError)
from cscklab.fd import derivative_stencils
from cscklab.radial import (RadialPotential, link_volume_constant,
                            scalar_curvature, volume)


@pytest.mark.parametrize("n,a", [(2, 0.5), (3, 1.0), (3, 2.0), (4, 0.7)])
def test_ricci_flat_ode_pointwise(n, a):
    f = CalabiForms(n, a)
    t = np.linspace(2 * math.log(a) - 4.0, 2 * math.log(a) + 8.0, 400)
    lhs = f.u1(t) ** (n - 1) * f.u2(t)
    assert np.max(np.abs(lhs / np.exp(n * t) - 1.0)) < 1e-13


@pytest.mark.parametrize("grid", [None, (-8.0, 6.0, 1200)])
def test_first_integral_on_grids(grid):
    model = calabi_resolution(3, 1.0, grid=grid, fit=grid is None)
    assert identity_deviation(model) < 1e-13
    u1 = model.profile.derivative(1)
    t = model.profile.t
    assert np.max(np.abs(u1**3 - np.exp(3 * t) - 1.0)
                  / (np.exp(3 * t) + 1.0)) < 1e-13


def test_gap_value_against_quadrature():
    f = CalabiForms(3, 1.0)
    g1 = lambda s: float(f.g1(np.asarray(s, dtype=float)))
    for t0 in (-2.0, 0.0, f.t_split - 1e-3, f.t_split + 1e-3, 2.0, 5.0):
        tail, _ = quad(g1, t0, 40.0, limit=200)
        # g(t0) = - int_{t0}^{inf} g' since g -> 0 at +infinity
        assert float(f.g(t0)) == pytest.approx(-tail, abs=1e-12)


def test_gap_ladder_internally_consistent():
    # FD of each closed form matches the next one, across the series split
    f = CalabiForms(3, 1.0)
    t = np.arange(-1.5, 1.5, 0.01)
    pairs = [(f.g, f.g1), (f.g1, f.g2), (f.g2, f.g3), (f.g3, f.g4),
             (f.u, f.u1), (f.u1, f.u2), (f.u2, f.u3), (f.u3, f.u4)]
    d = derivative_stencils(t, 1)
    for lower, upper in pairs:
        got = d.apply(lower(t))
        want = upper(t)
        scale = np.max(np.abs(want)) + 1.0
        assert np.max(np.abs(got - want)[5:-5]) < 1e-7 * scale


def test_forms_preserve_longdouble():
    f = CalabiForms(3, 1.0)
    t = np.linspace(-1.0, 1.0, 9).astype(np.longdouble)
    for fn in (f.u, f.u1, f.u2, f.u3, f.u4, f.g, f.g1, f.g4):
        assert fn(t).dtype == np.longdouble


def test_frozen_reference_model():
    model = calabi_resolution(3, 1.0)
    assert identity_deviation(model) < 1e-13
    assert model.nu_fitted == pytest.approx(-5.999690481420991, abs=1e-9)
    assert model.potential_gap_rate == pytest.approx(-3.9999504268757935, abs=1e-9)
    sc_sup, det_dev = cy_residual(model)
    assert sc_sup < 1e-12
    assert det_dev < 1e-12


@pytest.mark.parametrize("n", [3, 4])
def test_decay_rates_match_cone_orders(n):
    model = calabi_resolution(n, 1.0)
    assert model.potential_gap_rate == pytest.approx(2.0 - 2.0 * n, abs=0.05)
    assert model.nu_fitted == pytest.approx(-2.0 * n, abs=0.1)
    for k in range(5):
        assert decay_rate(model, k) == pytest.approx((2.0 - 2.0 * n) - k,
                                                     abs=0.1)


def test_cy_residual_detects_curvature():
    # a sampled non-CY profile through the FD route: u = e^t + 0.05 e^{t/2}
    t = np.arange(-2.0, 2.0, 0.01)
    prof = RadialPotential(n=3, t=t, u=np.exp(t) + 0.05 * np.exp(t / 2))
    sc_sup, det_dev = cy_residual(prof, route="fd")
    assert sc_sup > 1e-2
    assert det_dev > 1e-3
    with pytest.raises(ConfigurationError):
        cy_residual("not a model")


def test_volume_bookkeeping():
    # window volumes agree with the flat cone exactly; the whole excess is
    # the bottom endpoint term a^{2n} of the closed form
    grid = (-6.0, 4.0, 800)
    cal = calabi_resolution(3, 1.0, grid=grid, m=3, fit=False)
    fl = flat_model(3, grid=grid, m=3)
    assert cal.profile.m == 3
    w = (-3.0, 3.0)
    assert volume(cal.profile, w) == pytest.approx(volume(fl.profile, w),
                                                   rel=1e-12)
    coeff = volume_excess_coefficient(3, 1.0, m=3)
    assert coeff == pytest.approx(3.4451418533666462, rel=1e-12)
    assert coeff == pytest.approx(math.pi**3 / 9.0, rel=1e-12)
    assert coeff == pytest.approx(link_volume_constant(3, 3) / 3.0, rel=1e-12)


def test_flat_model_degenerate_limit():
    fl = flat_model(3)
    assert fl.is_flat
    assert identity_deviation(fl) == 0.0
    assert np.max(np.abs(scalar_curvature(fl.profile))) < 1e-12
    assert np.all(fl.gap_fn.u(fl.profile.t) == 0.0)
    sc_sup, det_dev = cy_residual(fl)
    assert sc_sup == 0.0 and det_dev == 0.0
    with pytest.raises(ConfigurationError):
        decay_fit(fl, 0)


def test_validation_and_windows():
    with pytest.raises(ConfigurationError):
        CalabiForms(1, 1.0)
    with pytest.raises(ConfigurationError):
        CalabiForms(3, 0.0)
    with pytest.raises(ConfigurationError):
        calabi_resolution(3, 1.0, grid=(2.0, 1.0, 100))
    with pytest.raises(ConfigurationError):
        calabi_resolution(3, 1.0, grid=(0.0, 1.0, 4))
    model = calabi_resolution(3, 1.0)
    with pytest.raises(ConfigurationError):
        decay_fit(model, 5)
    with pytest.raises(InsufficientDataError):
        decay_fit(model, 0, window=(1e-3, 1.1e-3))


def test_gap_series_split_continuity():
    # g evaluated across t_split from both branches differs by O(eps)
    f = CalabiForms(3, 1.0)
    eps = 1e-9
    lo = float(f.g(f.t_split + eps))
    hi = float(f.g(f.t_split - eps))
    assert abs(lo - hi) < 1e-8 * abs(lo)
