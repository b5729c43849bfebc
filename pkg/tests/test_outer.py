"""Outer models and the bottom-end cone surgery."""

import dataclasses
import math

import numpy as np
import pytest

from cscklab.errors import ConfigurationError, PositivityError
from cscklab.fd import derivative_stencils
from cscklab.outer import (OuterModel, SurgeryConfig, conify, fubini_study_cap,
                           manufactured_cap, truncated_cone, asymptotic_rate)
from cscklab.radial import scalar_curvature


def test_fubini_study_is_round():
    fs = fubini_study_cap(3)
    assert fs.target_sc == 12.0 and fs.is_constant_target
    assert fs.mu == 2.0 and fs.closure == "smooth_cap"
    assert fs.u1_limit_top == 1.0
    sc = scalar_curvature(fs.profile)
    t = fs.profile.t
    # deep end: u'' ~ e^t reaches 5e-12, so double rounding of the ratios
    # is amplified to ~1e-5 relative; the tight check belongs to t >= -8
    assert np.max(np.abs(sc[t >= -8.0] - 12.0)) < 1e-10
    assert np.max(np.abs(sc - 12.0)) < 1e-3


def test_fs_deviation_ladder():
    fs = fubini_study_cap(3)
    t = np.linspace(-3.0, 3.0, 61)
    # f = log(1+x) - x at moderate x: direct evaluation is accurate here
    x = np.exp(t)
    assert np.allclose(fs.dev_fn.u(t), np.log1p(x) - x, rtol=1e-14, atol=0)
    # small-x series branch against long-double direct evaluation
    ts = np.linspace(-14.0, -10.0, 41)
    xs = np.exp(ts.astype(np.longdouble))
    direct = (np.log1p(xs) - xs).astype(float)
    got = fs.dev_fn.u(ts)
    assert np.max(np.abs(got / direct - 1.0)) < 1e-10
    # ladder self-consistency through FD
    tf = np.arange(-2.0, 2.0, 0.005)
    d1 = derivative_stencils(tf, 1)
    assert np.max(np.abs(d1.apply(fs.dev_fn.u(tf)) - fs.dev_fn.d1(tf))[5:-5]) < 1e-9


def test_fs_asymptotic_rates():
    fs = fubini_study_cap(3)
    assert asymptotic_rate(fs, 0).exponent == pytest.approx(4.0, abs=5e-3)
    assert asymptotic_rate(fs, 0, which="metric").exponent == pytest.approx(
        2.0, abs=5e-3)


def test_truncated_cone_is_exact():
    tc = truncated_cone(3)
    assert tc.target_sc == 0.0
    assert tc.t_window[1] == pytest.approx(4.0)
    assert np.max(np.abs(scalar_curvature(tc.profile))) < 1e-12
    rep = asymptotic_rate(tc, 0)
    assert rep.exact and rep.exponent is None


def test_manufactured_cap_target_and_rates():
    man = manufactured_cap(3, 1.0, 0.01)
    assert not man.is_constant_target
    sc = scalar_curvature(man.profile)
    assert np.max(np.abs(sc - man.target_values(man.profile.t))) == 0.0
    assert asymptotic_rate(man, 0).exponent == pytest.approx(3.0, abs=1e-3)
    assert asymptotic_rate(man, 0, which="metric").exponent == pytest.approx(
        1.0, abs=1e-3)
    assert man.diagnostics["c_max"] == pytest.approx(0.02098793637720178,
                                                     rel=1e-12)


def test_manufactured_cap_positivity_guard():
    with pytest.raises(PositivityError) as exc:
        manufactured_cap(3, 1.0, 0.05)
    assert "c_max" in exc.value.diagnostics
    with pytest.raises(ConfigurationError):
        manufactured_cap(3, 2.5, 0.01)
    with pytest.raises(ConfigurationError):
        manufactured_cap(3, 1.0, 0.01, t_roll=10.0)  # beyond the window top


def test_outer_model_validation():
    fs = fubini_study_cap(3)
    with pytest.raises(ConfigurationError):
        dataclasses.replace(fs, closure="open")
    with pytest.raises(ConfigurationError):
        dataclasses.replace(fs, mu=3.0)
    with pytest.raises(ConfigurationError):
        dataclasses.replace(fs, q_t=99.0)
    with pytest.raises(ConfigurationError):
        asymptotic_rate(fs, 0, which="curvature")
    with pytest.raises(ConfigurationError):
        asymptotic_rate(fs, 3, which="metric")  # ladder order 5


def test_surgery_config_validation():
    SurgeryConfig.for_radii(0.1, 0.05).validate()
    with pytest.raises(ConfigurationError):
        SurgeryConfig(delta1=0.1, delta2=0.2, delta3=0.1, eps=0.05).validate()
    with pytest.raises(ConfigurationError):
        SurgeryConfig(delta1=0.1, delta2=0.01, delta3=0.2, eps=0.05).validate()
    with pytest.raises(ConfigurationError):
        SurgeryConfig.for_radii(0.4, 0.05).validate()  # region above r = 1/2
    with pytest.raises(ConfigurationError):
        SurgeryConfig.for_radii(0.1, -1.0).validate()


def test_conify_region_identities():
    fs = fubini_study_cap(3)
    cfg = SurgeryConfig.for_radii(0.1, 0.05)
    con = conify(fs, cfg)
    t = con.profile.t
    hi = t >= cfg.t_hi + 1e-9
    lo = t <= cfg.t_lo - 1e-9
    # untouched region is bitwise identical
    assert np.array_equal(con.fn.u(t[hi]), fs.fn.u(t[hi]))
    # exact cone below delta3, deviation identically zero there
    cone = cfg.eps**2 * np.exp(t[lo]) + con.cone_offset
    assert np.array_equal(con.fn.u(t[lo]), cone)
    assert np.all(con.dev_fn.u(t[lo]) == 0.0)
    assert con.cone_coef == pytest.approx(cfg.eps**2)
    # original curvature target survives above the surgery
    sc = scalar_curvature(con.profile)
    assert np.max(np.abs(sc[hi] - 12.0)) < 1e-9
    cert = con.diagnostics["positivity"]
    assert cert.ok and cert.margin_u1 > 0 and cert.margin_u2 > 0
    assert cert.eps_max == pytest.approx(0.06293156833827426, rel=1e-9)


def test_conify_ladder_consistency():
    # chain-rule ladder of the composed potential against FD, across the
    # surgery zone where every piece (cone, ramp, outer) is active
    con = conify(fubini_study_cap(3), SurgeryConfig.for_radii(0.1, 0.05))
    t = np.arange(-6.0, -2.0, 0.005)
    d1 = derivative_stencils(t, 1)
    for f, g in ((con.fn.u, con.fn.d1), (con.fn.d1, con.fn.d2),
                 (con.dev_fn.u, con.dev_fn.d1), (con.dev_fn.d1, con.dev_fn.d2)):
        want = g(t)
        err = np.max(np.abs(d1.apply(f(t)) - want)[5:-5])
        assert err < 1e-6 * (np.max(np.abs(want)) + 1.0)


def test_conify_guards():
    fs = fubini_study_cap(3)
    cfg = SurgeryConfig.for_radii(0.1, 0.08)  # above the certified eps_max
    with pytest.raises(PositivityError) as exc:
        conify(fs, cfg)
    assert exc.value.diagnostics["eps_max"] < 0.08
    con = conify(fs, SurgeryConfig.for_radii(0.1, 0.05))
    with pytest.raises(ConfigurationError):
        conify(con, SurgeryConfig.for_radii(0.1, 0.05))
