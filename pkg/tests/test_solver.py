"""Fixed-point solver, error-rate fits, constant prediction, and verifiers.

Frozen numbers were measured once on the default grids and pinned; every
solve below is deterministic (seeded probes, LU factorizations), so the
tolerances are tight.  Loose bounds appear only where the assertion is a
property (monotonicity, a slope floor), not a calibration.
"""

import math

import numpy as np
import pytest

from cscklab.acmodels import calabi_resolution
from cscklab.errors import ConfigurationError, NumericalError
from cscklab.fitting import fit_power_law
from cscklab.outer import manufactured_cap, truncated_cone
from cscklab.preglue import CutoffSpec, glue
from cscklab.solver import (SolveConfig, admissible_delta, cscK_sweep,
                            error_rate_sweep, predicted_constant,
                            quadratic_estimate, ricci_flat_verify, solve_cscK)

_CFG = SolveConfig(delta=-1.0)
_SWEEP_LAMS = [0.078, 0.0552, 0.039, 0.0276, 0.02]


# ---------------------------------------------------------------------------
# admissible weights


def test_admissible_range_and_exponent():
    rng = admissible_delta(3, 2.0)
    assert (rng.lo, rng.hi) == (-2.0, 0.0)
    assert rng.contains(-1.0) and not rng.contains(-2.0)
    assert rng.error_exponent(-1.0) == 3.75
    rng4 = admissible_delta(4, 2.0)
    assert (rng4.lo, rng4.hi) == (-4.0, 0.0)
    assert rng4.error_exponent(-2.0) == pytest.approx(4.8, rel=1e-12)
    with pytest.raises(ConfigurationError):
        rng.check(-2.0)
    with pytest.raises(ConfigurationError):
        admissible_delta(3, 0.0)
    with pytest.raises(ConfigurationError):
        admissible_delta(3, 2.5)
    with pytest.raises(ConfigurationError):
        admissible_delta(1, 2.0)


def test_admissible_n2_is_empty_and_warns():
    with pytest.warns(RuntimeWarning):
        rng = admissible_delta(2, 2.0)
    assert rng.lo == rng.hi == 0.0
    assert not rng.contains(-0.5)


# ---------------------------------------------------------------------------
# single solves, frozen


def test_flat_gluing_is_exact_fixed_point(flat3, outer_tc):
    rep = solve_cscK(outer_tc, flat3, 0.05, _CFG)
    # flat model into a flat cone reproduces the flat metric identically:
    # the first residual evaluation sits at exactly zero
    assert rep.iters == 1
    assert rep.sc_residual == 0.0
    assert rep.achieved_constant == 0.0
    assert rep.far_sup == 0.0
    assert rep.converged
    assert rep.label == "truncated-cone+flat"


def test_solve_truncated_cone_frozen(calabi31, outer_tc):
    rep = solve_cscK(outer_tc, calabi31, 0.02, _CFG)
    assert rep.converged
    assert rep.iters == 4
    assert rep.sc_residual == pytest.approx(5.6731093850041175e-11, rel=1e-4)
    assert rep.contraction_max == pytest.approx(0.00218361127119755, rel=1e-6)
    assert rep.ball_fraction == pytest.approx(0.00223617858434251, rel=1e-6)
    # scalar-flat target: the achieved constant is the rounding-scale phi(q)
    assert rep.achieved_constant == pytest.approx(0.0, abs=1e-12)
    assert rep.phi_q == rep.achieved_constant
    assert rep.auto_coeff is None  # Dirichlet top carries no gauge column
    assert rep.contraction_rate < 0.01


def test_solve_fubini_study_frozen(calabi31, outer_fs):
    rep = solve_cscK(outer_fs, calabi31, 0.02, _CFG)
    assert rep.converged
    assert rep.iters == 8
    assert rep.sc_residual == pytest.approx(4.052978053263846e-09, rel=1e-4)
    assert rep.contraction_max == pytest.approx(0.08492340847290175, rel=1e-6)
    assert rep.ball_fraction == pytest.approx(0.14528434884361596, rel=1e-6)
    assert rep.phi_q == pytest.approx(9.817316185825262e-09, rel=1e-4)
    assert rep.achieved_constant == pytest.approx(12.0 + rep.phi_q, rel=1e-12)
    assert rep.auto_coeff == pytest.approx(-7.730088544036714e-08, rel=1e-4)
    assert rep.contraction_rate == pytest.approx(0.0632120149574216, rel=1e-4)


def test_newton_variant_finds_same_root(calabi31, outer_tc):
    plain = solve_cscK(outer_tc, calabi31, 0.02, _CFG)
    newton = solve_cscK(outer_tc, calabi31, 0.02,
                        SolveConfig(delta=-1.0, newton=True))
    assert newton.iters <= plain.iters
    diff = np.max(np.abs(newton.phi.astype(float) - plain.phi.astype(float)))
    assert diff < 1e-12


# ---------------------------------------------------------------------------
# lambda sweeps: contraction, far-field decay, constant gap


def test_sweep_truncated_cone(calabi31, outer_tc):
    rows = cscK_sweep(outer_tc, calabi31, _SWEEP_LAMS, _CFG)
    assert [r.lam for r in rows] == _SWEEP_LAMS
    assert [r.iters for r in rows] == [5, 4, 4, 4, 4]
    for r in rows:
        assert r.sc_residual < 3.5e-9
        assert r.contraction_max < 0.018
    balls = [r.ball_fraction for r in rows]
    fars = [r.far_sup for r in rows]
    assert all(b > a for a, b in zip(balls[1:], balls))
    assert all(b > a for a, b in zip(fars[1:], fars))
    slope = fit_power_law(np.array(_SWEEP_LAMS), np.array(fars),
                          min_points=4).exponent
    assert slope == pytest.approx(6.040221541097341, rel=1e-6)
    assert slope > 2.5
    # scalar-flat target: achieved and predicted constants agree to rounding
    for r in rows:
        assert abs(r.achieved_const - r.predicted_const) < 1e-9


def test_sweep_fubini_study(calabi31, outer_fs):
    rows = cscK_sweep(outer_fs, calabi31, _SWEEP_LAMS, _CFG)
    assert [r.iters for r in rows] == [22, 15, 12, 9, 8]
    for r in rows:
        assert r.sc_residual < 6e-9
        assert r.contraction_max < 1.0
    assert rows[0].contraction_max == pytest.approx(0.754109, rel=1e-4)
    balls = [r.ball_fraction for r in rows]
    fars = [r.far_sup for r in rows]
    assert all(b > a for a, b in zip(balls[1:], balls))
    assert all(b > a for a, b in zip(fars[1:], fars))
    lams = np.array(_SWEEP_LAMS)
    far_slope = fit_power_law(lams, np.array(fars), min_points=4).exponent
    assert far_slope == pytest.approx(3.2983306460116237, rel=1e-6)
    assert far_slope > 2.5
    gaps = np.array([abs(r.achieved_const - r.predicted_const) for r in rows])
    gap_slope = fit_power_law(lams, gaps, min_points=4).exponent
    assert gap_slope == pytest.approx(4.139570996435272, rel=1e-6)
    assert gap_slope > 2.0


def test_sweep_rejects_empty(calabi31, outer_tc):
    with pytest.raises(ConfigurationError):
        cscK_sweep(outer_tc, calabi31, [], _CFG)


# ---------------------------------------------------------------------------
# pre-gluing error rates against the predicted exponent


@pytest.mark.parametrize("n, mu, delta, fitted", [
    (3, 2.0, -1.0, 3.7503706721487577),
    (3, 1.0, -1.0, 3.4085459190268557),
    (4, 2.0, -2.0, 4.800496736773585),
])
def test_error_rate_matches_prediction(n, mu, delta, fitted):
    outer = truncated_cone(n, mu=mu)
    model = calabi_resolution(n, 1.0)
    rep = error_rate_sweep(outer, model, [0.08, 0.04, 0.02, 0.01, 0.005],
                           delta)
    assert not rep.exact_zero
    assert rep.fitted_exponent == pytest.approx(fitted, rel=1e-6)
    predicted = 2.0 * n * (mu + 2.0 - delta) / (2.0 * n + mu)
    assert rep.predicted_exponent == pytest.approx(predicted, rel=1e-12)
    assert abs(rep.fitted_exponent - predicted) < 0.1 * predicted


def test_error_rate_compact_cap(calabi31, outer_fs):
    rep = error_rate_sweep(outer_fs, calabi31, [0.08, 0.04, 0.02, 0.01, 0.005],
                           -1.0)
    assert rep.fitted_exponent == pytest.approx(3.78142839986232, rel=1e-6)
    assert abs(rep.fitted_exponent - 3.75) < 0.375


def test_error_rate_flat_is_exact_zero(flat3, outer_tc):
    rep = error_rate_sweep(outer_tc, flat3, [0.08, 0.04, 0.02, 0.01], -1.0)
    assert rep.exact_zero
    assert rep.fit is None and rep.fitted_exponent is None


# ---------------------------------------------------------------------------
# cohomological constant prediction


def test_predicted_constant_fubini_study(calabi31, outer_fs):
    p = predicted_constant(outer_fs, calabi31, 0.078)
    assert p.kstar == pytest.approx(12.0, rel=1e-9)
    assert p.value == pytest.approx(12.000002702395818, rel=1e-12)
    assert p.volume_outer == pytest.approx(math.pi**3 / 3.0, rel=1e-9)
    assert float(p) == p.value
    # excess volume shrinks like lam^{2n}, so the predicted constant
    # decreases towards the target from above
    q = predicted_constant(outer_fs, calabi31, 0.02)
    assert 12.0 < q.value < p.value
    ratio = (p.value - 12.0) / (q.value - 12.0)
    assert ratio == pytest.approx((0.078 / 0.02) ** 6, rel=1e-3)


def test_predicted_constant_rejects(calabi31, outer_fs):
    man = manufactured_cap(3, 1.0, 0.01)
    with pytest.raises(ConfigurationError):
        predicted_constant(man, calabi31, 0.05)
    with pytest.raises(ConfigurationError):
        predicted_constant(outer_fs, calabi31, 2.0)  # removes all volume


# ---------------------------------------------------------------------------
# Ricci-flat determinant verifier


def test_ricci_flat_seam_saturation_default_cutoff(calabi31, outer_tc):
    # the C^5 neck cutoff leaves a sixth-derivative seam the order-4
    # stencils cannot resolve: the verifier reports the honest failure
    g = glue(calabi31, outer_tc, 0.02)
    rep = solve_cscK(outer_tc, calabi31, 0.02, _CFG, glued=g)
    rf = ricci_flat_verify(rep, g)
    assert rf.applicable
    assert rf.deviation == pytest.approx(7.418353360692624e-07, rel=1e-4)
    assert not rf.ok


def test_ricci_flat_passes_smooth_cutoff(calabi31, outer_tc):
    g = glue(calabi31, outer_tc, 0.02, cutoff=CutoffSpec(order=7))
    rep = solve_cscK(outer_tc, calabi31, 0.02, _CFG, spacing=0.005, glued=g)
    rf = ricci_flat_verify(rep, g)
    assert rf.applicable
    assert rf.deviation == pytest.approx(9.270786525614194e-11, rel=1e-3)
    assert rf.deviation < rf.limit
    assert rf.ok


def test_ricci_flat_not_applicable_for_positive_target(calabi31, outer_fs):
    rep = solve_cscK(outer_fs, calabi31, 0.02, _CFG)
    rf = ricci_flat_verify(rep, glue(calabi31, outer_fs, 0.02))
    assert not rf.applicable
    assert math.isnan(rf.deviation)


# ---------------------------------------------------------------------------
# quadratic control of the nonlinearity


def test_quadratic_estimate_stable_over_lambda(calabi31, outer_fs):
    vals = [quadratic_estimate(outer_fs, calabi31, lam, -1.0)
            for lam in (0.078, 0.039, 0.02)]
    assert vals[0] == pytest.approx(8909.02678875199, rel=1e-6)
    assert vals[1] == pytest.approx(7621.704733211329, rel=1e-6)
    assert vals[2] == pytest.approx(7007.864680349955, rel=1e-6)
    assert max(vals) / min(vals) < 2.0


# ---------------------------------------------------------------------------
# failure modes


def test_ball_exit_raises(calabi31, outer_fs):
    with pytest.raises(NumericalError) as exc:
        solve_cscK(outer_fs, calabi31, 0.078,
                   SolveConfig(delta=-1.0, b_tilde=0.1))
    assert "ball" in exc.value.diagnostics


def test_inadmissible_weight_raises(calabi31, outer_fs):
    with pytest.raises(ConfigurationError):
        solve_cscK(outer_fs, calabi31, 0.02, SolveConfig(delta=-3.0))
