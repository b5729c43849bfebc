import numpy as np
import pytest

from cscklab.acmodels import calabi_resolution, flat_model
from cscklab.linear import (_mollifier, build_modified_system,
                            discretize_glued, weighted_norm)
from cscklab.outer import fubini_study_cap, truncated_cone
from cscklab.preglue import glue
from cscklab.solver import _nonlinear_residual


@pytest.fixture(scope="session")
def calabi31():
    return calabi_resolution(3, 1.0)


@pytest.fixture(scope="session")
def flat3():
    return flat_model(3)


@pytest.fixture(scope="session")
def outer_fs():
    return fubini_study_cap(3)


@pytest.fixture(scope="session")
def outer_tc():
    return truncated_cone(3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def fd_match_metric(model, outer, lam, spacing, eps=1e-8, seed=20240817,
                    delta=-1.0):
    """Worst-probe weighted mismatch between the assembled linearization and
    a centered difference of the nonlinear residual map.

    Probes are the u' direction plus seeded mollifier bumps; these have
    exactly compact support, so adding eps * phi never threatens positivity
    deep in the s-chart where u'' is exponentially small.
    """
    glued = glue(model, outer, lam)
    problem = discretize_glued(glued, spacing=spacing)
    t, st = problem.t, problem.stencils()
    system = build_modified_system(problem, delta)
    ladder = problem.u_derivs
    target = problem.target
    keep = np.ones(len(t), bool)
    keep[system.bc_rows] = False
    u1 = ladder[0]
    probes = [u1 / np.abs(u1).max()]
    rng = np.random.default_rng(seed)
    lo = float(t[0]) + 3.0
    hi = min(-0.5, float(t[-1]) - 2.0)
    for _ in range(8):
        c = rng.uniform(lo + 1.0, hi - 1.0)
        R = rng.uniform(0.8, min(2.5, c - lo, hi - c))
        probes.append(_mollifier(t, c, R))
    worst = 0.0
    for phi in probes:
        mphi = system.apply_precise(phi, ladder)
        fp, _ = _nonlinear_residual(problem, st, ladder, target, eps * phi)
        fm, _ = _nonlinear_residual(problem, st, ladder, target, -eps * phi)
        fd = -(fp - fm) / (2.0 * eps)
        diff = np.where(keep, mphi - fd, 0.0)
        num = weighted_norm(t, diff, 0, delta - 4.0, problem.rho, stencils=st)
        den = weighted_norm(t, phi, 4, delta, problem.rho, stencils=st)
        worst = max(worst, num / den)
    return worst
