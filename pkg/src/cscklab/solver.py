r"""Fixed-point solver for the point-modified constant-curvature equation.

The equation solved on a glued background u is

    Sc(u + phi) = S* + phi(q),

whose extra evaluation term removes the constants from the kernel.  With
M = -dSc + point term, eps = Sc(u) - S* and N(phi) the part of Sc(u+phi)
beyond first order, the iteration is the plain fixed point

    phi_{k+1} = phi_k + M^{-1} (Sc(u+phi_k) - S* - phi_k(q)),

run in double precision until the residual reaches the rounding floor of
the double-precision curvature evaluation, then polished in long double
against the frozen double-precision factorization.  A Newton variant
(reassembling dSc at the current iterate) sits behind a flag for
experiments; the default path keeps the frozen linearization because its
contraction ratio is itself a measured quantity.

Constant prediction: both volumes are endpoint-exact because the volume
density is the derivative of u'(t)^n / n, so the glued volume differs from
the cone volume exactly by the bottom limit (cone_coef lam^2 a^2)^n.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .acmodels import ACResolutionModel
from .errors import (ConfigurationError, InsufficientDataError, NumericalError,
                     PositivityError)
from .fitting import PowerLawFit, fit_power_law
from .linear import (GaussianBump, DiscreteProblem, ModifiedSystem,
                     _cap_defect, build_modified_system, discretize_glued,
                     weighted_norm)
from .outer import OuterModel
from .preglue import GluedMetric, SweepRow, glue, sweep_rows
from .radial import (link_volume_constant, log_det_from, sc_from_derivs,
                     sc_jacobian_coeffs)

__all__ = [
    "AdmissibleRange",
    "admissible_delta",
    "SolveConfig",
    "IterationStep",
    "SolutionReport",
    "solve_cscK",
    "ErrorRateReport",
    "error_rate_sweep",
    "ConstantPrediction",
    "predicted_constant",
    "SolveRow",
    "cscK_sweep",
    "RicciFlatReport",
    "ricci_flat_verify",
    "quadratic_estimate",
]

# double-precision curvature evaluations bottom out near this residual
_PHASE1_FLOOR = 3e-6
_FAR_T = 2.0 * math.log(0.35)


# ---------------------------------------------------------------------------
# Weight admissibility


@dataclass(frozen=True)
class AdmissibleRange:
    """Open weight interval (4-2n, 0) with the error-exponent map."""

    n: int
    mu: float
    lo: float
    hi: float

    def contains(self, delta: float) -> bool:
        return self.lo < delta < self.hi

    def error_exponent(self, delta: float) -> float:
        return 2.0 * self.n * (self.mu + 2.0 - delta) / (2.0 * self.n + self.mu)

    def check(self, delta: float) -> None:
        if not self.contains(delta):
            raise ConfigurationError(
                f"weight delta={delta:g} outside the admissible interval "
                f"({self.lo:g}, {self.hi:g}) for n={self.n}")


def admissible_delta(n: int, mu: float) -> AdmissibleRange:
    """Admissible weights and the predicted error exponent.

    The exponent 2n(mu+2-delta)/(2n+mu) exceeds the ball exponent 2-delta
    exactly by mu(2n-2+delta)/(2n+mu); inside the interval 2n-2+delta > 2,
    so the excess is automatic for mu > 0.  Both the identity and its
    positivity are asserted here rather than assumed.
    """
    if int(n) != n or n < 2:
        raise ConfigurationError("need integer complex dimension n >= 2")
    n = int(n)
    if not 0.0 < mu <= 2.0:
        raise ConfigurationError(f"cone-convergence rate mu={mu:g} not in (0, 2]")
    rng = AdmissibleRange(n=n, mu=float(mu), lo=4.0 - 2.0 * n, hi=0.0)
    if n == 2:
        warnings.warn("n=2: the admissible weight interval (0, 0) is empty; "
                      "the construction needs n >= 3", RuntimeWarning,
                      stacklevel=2)
        return rng
    for delta in (rng.lo + 1e-9, 0.5 * (rng.lo + rng.hi), rng.hi - 1e-9):
        excess = rng.error_exponent(delta) - (2.0 - delta)
        closed = mu * (2.0 * n - 2.0 + delta) / (2.0 * n + mu)
        if abs(excess - closed) > 1e-10 or closed <= 0.0:
            raise NumericalError("exponent-excess identity failed",
                                 diagnostics={"delta": delta, "excess": excess})
    return rng


# ---------------------------------------------------------------------------
# Solve configuration and report


@dataclass(frozen=True)
class SolveConfig:
    """Iteration controls.

    b_tilde fixes the radius b_tilde * lam^(2-delta) of the correction ball.
    The default is calibrated so the largest admissible lam for the compact
    cap target stays inside with margin (the measured |phi| there is about
    300 * lam^(2-delta); scalar-flat targets sit near 1); the measured
    contraction ratio at that lam is far below 1/2, so the radius is not
    doing the converging, only guarding against runaway iterates.
    """

    delta: float
    b_tilde: float = 500.0
    max_iter: int = 40
    tol_residual: float = 1e-8
    newton: bool = False
    polish_sweeps: int = 24


@dataclass(frozen=True)
class IterationStep:
    k: int
    residual: float
    correction: float
    ratio: float | None


@dataclass
class SolutionReport:
    lam: float
    delta: float
    phi: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    sc_residual: float
    achieved_constant: float | None
    phi_q: float
    iterations: list[IterationStep] = field(repr=False)
    ball_fraction: float
    contraction_max: float
    converged: bool
    rcond: float
    far_sup: float
    problem: DiscreteProblem = field(repr=False)
    label: str = ""
    # coefficient of the moment-map column on grids closed at both ends:
    # the measured obstruction from the radial automorphism, never hidden
    auto_coeff: float | None = None
    # geometric decay rate fitted over the whole correction history; this is
    # the statement "corrections decay like r^k", robust to the phase beats a
    # complex contraction mode puts into adjacent-step ratios
    contraction_rate: float = 0.0

    @property
    def iters(self) -> int:
        return len(self.iterations)


def _op_mask(system: ModifiedSystem) -> np.ndarray:
    mask = np.ones(len(system.problem.nodes), dtype=bool)
    mask[system.bc_rows] = False
    return mask


def _nonlinear_residual(problem: DiscreteProblem, stencils, ladder, target,
                        phi, c2=0.0) -> tuple[np.ndarray, list]:
    """Sc(u+phi) - target - point terms on all rows, plus phi's stencil ladder.

    c2 is the accumulated moment-map coefficient on grids closed at both
    ends; it lives outside phi (see ModifiedSystem) and enters the achieved
    equation as c2 * shape.
    """
    d = [s.apply(phi) for s in stencils]
    sc = sc_from_derivs(problem.n, *(u + dd for u, dd in zip(ladder, d)))
    out = sc - target - phi[problem.q_index]
    if problem.q2_shape is not None and c2 != 0.0:
        shape = problem.q2_shape.astype(phi.dtype, copy=False)
        out = out - c2 * shape
    return out, d


def _bc_values(problem: DiscreteProblem, phi, d) -> list[tuple[int, object]]:
    nlast = len(phi) - 1
    vals = []
    if problem.closure_bottom == "dirichlet":
        vals += [(0, phi[0]), (1, d[0][0])]
    if problem.closure_top == "dirichlet":
        vals += [(nlast, phi[nlast]), (nlast - 1, d[0][nlast])]
    else:
        vals += [(nlast, _cap_defect(phi, nlast)),
                 (nlast - 1, _cap_defect(phi, nlast - 1))]
    return vals


def solve_cscK(outer: OuterModel, model: ACResolutionModel, lam: float,
               cfg: SolveConfig, spacing: float = 0.02,
               glued: GluedMetric | None = None) -> SolutionReport:
    """Run the fixed point on the glued background and polish the root.

    Raises NumericalError when the correction ratios sit at or above 1 for
    three consecutive steps (with the ratio history attached) or when the
    iterate leaves the ball |phi|_{4,delta} <= b_tilde lam^{2-delta};
    positivity loss first tries three step halvings, then raises.
    """
    rng = admissible_delta(outer.n, outer.mu)
    rng.check(cfg.delta)
    if glued is None:
        glued = glue(model, outer, lam)
    problem = discretize_glued(glued, spacing=spacing)
    system = build_modified_system(problem, cfg.delta)
    st = system._stencils
    t = problem.t
    n = problem.n
    rho = problem.rho
    opmask = _op_mask(system)
    ball_limit = cfg.b_tilde * lam ** (2.0 - cfg.delta)

    ladder = problem.u_derivs
    target = problem.target
    phi = np.zeros_like(t)
    c2 = 0.0
    steps: list[IterationStep] = []
    prev_corr = None
    bad_ratios = 0
    floor = max(cfg.tol_residual, _PHASE1_FLOOR)
    residual = None
    for k in range(1, cfg.max_iter + 1):
        if cfg.newton and k > 1:
            d = [s.apply(phi) for s in st]
            cur = replace(problem,
                          u_derivs=tuple(u + dd for u, dd in zip(ladder, d)))
            system = build_modified_system(cur, cfg.delta)
        f_vec, _ = _nonlinear_residual(problem, st, ladder, target, phi, c2)
        residual = float(np.max(np.abs(f_vec[opmask])))
        if residual < floor:
            steps.append(IterationStep(k=k, residual=residual, correction=0.0,
                                       ratio=None))
            break
        delta_phi, aux = system.solve_aux(f_vec)
        delta_c2 = float(aux[1]) if aux.size > 1 else 0.0
        for attempt in range(4):
            trial = phi + delta_phi
            d1 = st[0].apply(trial)
            d2 = st[1].apply(trial)
            if (ladder[0] + d1).min() > 0.0 and (ladder[1] + d2).min() > 0.0:
                break
            if attempt == 3:
                raise PositivityError(
                    "iterate loses metric positivity even after damping",
                    diagnostics={"lam": lam, "step": k})
            delta_phi = 0.5 * delta_phi
            delta_c2 = 0.5 * delta_c2
        phi = phi + delta_phi
        c2 += delta_c2
        corr = weighted_norm(t, delta_phi, 4, cfg.delta, rho, stencils=st)
        ratio = None if prev_corr is None or prev_corr == 0.0 else corr / prev_corr
        prev_corr = corr
        steps.append(IterationStep(k=k, residual=residual, correction=corr,
                                   ratio=ratio))
        if ratio is not None and ratio >= 1.0:
            bad_ratios += 1
            if bad_ratios >= 3:
                raise NumericalError(
                    "fixed point diverges: three consecutive ratios >= 1",
                    diagnostics={"ratios": [s.ratio for s in steps],
                                 "residuals": [s.residual for s in steps]})
        else:
            bad_ratios = 0
        norm_phi = weighted_norm(t, phi, 4, cfg.delta, rho, stencils=st)
        if norm_phi > ball_limit:
            raise NumericalError(
                "iterate left the contraction ball",
                diagnostics={"phi_norm": norm_phi, "ball": ball_limit,
                             "lam": lam, "step": k})
    else:
        if residual is None or residual > 1e-3:
            raise NumericalError(
                "no convergence within max_iter",
                diagnostics={"residuals": [s.residual for s in steps]})

    # long-double polish against the frozen factorization
    t_ld = t.astype(np.longdouble)
    ladder_ld = glued.fn.ladder(t_ld)
    target_ld = glued.outer.target_values(t_ld)
    phi_ld = phi.astype(np.longdouble)
    f_ld, d_ld = _nonlinear_residual(problem, st, ladder_ld, target_ld,
                                     phi_ld, c2)
    res_ld = float(np.max(np.abs(f_ld[opmask])))
    for _ in range(cfg.polish_sweeps):
        if res_ld <= cfg.tol_residual or res_ld == 0.0:
            break
        rhs = np.asarray(f_ld, dtype=float)
        for i, v in _bc_values(problem, phi_ld, d_ld):
            rhs[i] = -float(v)
        dphi, aux = system.solve_raw(rhs)
        phi_ld = phi_ld + dphi
        if aux.size > 1:
            c2 += float(aux[1])
        f_ld, d_ld = _nonlinear_residual(problem, st, ladder_ld, target_ld,
                                         phi_ld, c2)
        res_ld = float(np.max(np.abs(f_ld[opmask])))

    phi_f = phi_ld.astype(float)
    phi_q = float(phi_ld[problem.q_index])
    auto_coeff = None
    if problem.q2_shape is not None:
        auto_coeff = c2
    achieved = None
    if glued.outer.is_constant_target:
        achieved = float(glued.outer.target_sc) + phi_q
    norm_phi = weighted_norm(t, phi_f, 4, cfg.delta, rho, stencils=st)
    ratios = [s.ratio for s in steps if s.ratio is not None]
    corrs = [(s.k, s.correction) for s in steps if s.correction > 0.0]
    rate = 0.0
    if len(corrs) >= 2:
        ks = np.array([k for k, _ in corrs], dtype=float)
        ls = np.log([c for _, c in corrs])
        rate = float(np.exp(np.polyfit(ks, ls, 1)[0]))
    far = t >= _FAR_T
    return SolutionReport(
        lam=float(lam), delta=float(cfg.delta), phi=phi_ld, t=t,
        sc_residual=res_ld, achieved_constant=achieved, phi_q=phi_q,
        iterations=steps, ball_fraction=norm_phi / ball_limit,
        contraction_max=max(ratios) if ratios else 0.0,
        converged=res_ld <= cfg.tol_residual, rcond=system.rcond,
        far_sup=float(np.max(np.abs(phi_f[far]))) if far.any() else 0.0,
        problem=problem, label=f"{glued.outer.label}+{model.profile.label}",
        auto_coeff=auto_coeff, contraction_rate=rate,
    )


# ---------------------------------------------------------------------------
# Error-rate sweep (pre-gluing error norm vs lambda)


@dataclass
class ErrorRateReport:
    rows: list[SweepRow]
    predicted_exponent: float
    fit: PowerLawFit | None
    exact_zero: bool

    @property
    def fitted_exponent(self) -> float | None:
        return None if self.fit is None else self.fit.exponent


def error_rate_sweep(outer: OuterModel, model: ACResolutionModel,
                     lambdas: list[float], delta: float) -> ErrorRateReport:
    """Fit |eps(lam)| in the (0, delta-4) norm against the predicted law."""
    rng = admissible_delta(outer.n, outer.mu)
    rng.check(delta)
    rows = sweep_rows(model, outer, lambdas, delta)
    totals = np.array([r.err_total for r in rows])
    if np.all(totals == 0.0):
        return ErrorRateReport(rows=rows, fit=None, exact_zero=True,
                               predicted_exponent=rng.error_exponent(delta))
    lams = np.array([r.lam for r in rows])
    fit = fit_power_law(lams, totals, min_points=4)
    return ErrorRateReport(rows=rows, fit=fit, exact_zero=False,
                           predicted_exponent=rng.error_exponent(delta))


# ---------------------------------------------------------------------------
# Cohomological constant prediction


@dataclass(frozen=True)
class ConstantPrediction:
    value: float
    kstar: float
    volume_outer: float
    volume_excess: float

    def __float__(self) -> float:
        return self.value


def predicted_constant(outer: OuterModel, model: ACResolutionModel,
                       lam: float) -> ConstantPrediction:
    """Sc(omega) * Vol(omega) / Vol(omega_lam), both volumes endpoint-exact.

    The resolution replaces the cone tip, whose u'^n limit is 0, with the
    model bottom limit (cone_coef lam^2 a^2)^n, so the glued space carries
    exactly that much less volume; kstar is the coefficient of lam^{2n} in
    the resulting expansion of the constant.
    """
    if not outer.is_constant_target:
        raise ConfigurationError("constant prediction needs a constant target")
    n = outer.n
    t0, t1 = outer.t_window
    top = outer.u1_limit_top
    if top is None:
        top = float(outer.fn.d1(np.array([t1]))[0])
    bot = float(outer.fn.d1(np.array([t0]))[0])
    span = top**n - bot**n
    if span <= 0.0:
        raise NumericalError("outer volume span is not positive",
                             diagnostics={"top": top, "bot": bot})
    excess = (outer.cone_coef * lam**2 * model.a**2) ** n
    if excess >= span:
        raise ConfigurationError(
            f"lam={lam:g} removes the whole outer volume; far outside regime")
    c_over_n = link_volume_constant(n, outer.m) / n
    s_target = float(outer.target_sc)
    return ConstantPrediction(
        value=s_target * span / (span - excess),
        kstar=s_target * (outer.cone_coef * model.a**2) ** n / span,
        volume_outer=c_over_n * span,
        volume_excess=c_over_n * excess,
    )


# ---------------------------------------------------------------------------
# Solve sweep


@dataclass(frozen=True)
class SolveRow:
    lam: float
    delta: float
    iters: int
    sc_residual: float
    achieved_const: float
    predicted_const: float
    phi_q: float
    ball_fraction: float
    contraction_max: float
    far_sup: float


def cscK_sweep(outer: OuterModel, model: ACResolutionModel,
               lambdas: list[float], cfg: SolveConfig,
               spacing: float = 0.02) -> list[SolveRow]:
    if not lambdas:
        raise ConfigurationError("empty lambda list")
    rows = []
    for lam in sorted(set(float(x) for x in lambdas), reverse=True):
        rep = solve_cscK(outer, model, lam, cfg, spacing=spacing)
        if outer.is_constant_target:
            pred = predicted_constant(outer, model, lam).value
            achieved = rep.achieved_constant
        else:
            pred = math.nan
            achieved = math.nan
        rows.append(SolveRow(
            lam=lam, delta=cfg.delta, iters=rep.iters,
            sc_residual=rep.sc_residual, achieved_const=achieved,
            predicted_const=pred, phi_q=rep.phi_q,
            ball_fraction=rep.ball_fraction,
            contraction_max=rep.contraction_max, far_sup=rep.far_sup))
    return rows


# ---------------------------------------------------------------------------
# Ricci-flat corollary check


@dataclass(frozen=True)
class RicciFlatReport:
    applicable: bool
    deviation: float
    limit: float
    ok: bool
    achieved_constant: float | None


def ricci_flat_verify(report: SolutionReport, background: GluedMetric,
                      interior: float = 0.8) -> RicciFlatReport:
    """Constancy of the determinant density e^{-nt} u'^{n-1} u'' at u+phi.

    Scalar-flat + Kaehler forces Ricci-flat, so the log-determinant of the
    solved metric must be constant; the deviation is measured over the
    interior fraction of the nodes, away from the closure layers, and
    compared against 10x the achieved curvature residual.
    """
    achieved = report.achieved_constant
    if achieved is None or abs(achieved) > 1e-6:
        return RicciFlatReport(applicable=False, deviation=math.nan,
                               limit=math.nan, ok=False,
                               achieved_constant=achieved)
    problem = report.problem
    st = problem.stencils()
    t_ld = report.t.astype(np.longdouble)
    ladder = background.fn.ladder(t_ld)
    u1p = ladder[0] + st[0].apply(report.phi)
    u2p = ladder[1] + st[1].apply(report.phi)
    logq = log_det_from(problem.n, t_ld, u1p, u2p).astype(float)
    npts = len(logq)
    drop = int(round(0.5 * (1.0 - interior) * npts))
    inner = logq[drop:npts - drop]
    deviation = float(np.max(np.abs(inner - np.median(inner))))
    limit = 10.0 * report.sc_residual
    return RicciFlatReport(applicable=True, deviation=deviation, limit=limit,
                           ok=deviation <= limit, achieved_constant=achieved)


# ---------------------------------------------------------------------------
# Quadratic-control measurement


def quadratic_estimate(outer: OuterModel, model: ACResolutionModel,
                       lam: float, delta: float, n_pairs: int = 6,
                       seed: int = 20240817,
                       spacing: float = 0.02) -> float:
    """Empirical C with |N(p1)-N(p2)| <= C (|p1|+|p2|) |p1-p2| in ball norms.

    N(phi) = Sc(u+phi) - Sc(u) - dSc[phi] with stencil derivatives
    throughout; samples are pairs of bump profiles at ball-sized amplitude.
    """
    glued = glue(model, outer, lam)
    problem = discretize_glued(glued, spacing=spacing)
    st = problem.nodes.all_stencils()
    t = problem.t
    rho = problem.rho
    ladder = problem.u_derivs
    sc0 = sc_from_derivs(problem.n, *ladder)
    coeffs = sc_jacobian_coeffs(problem.n, *ladder)
    scale = lam ** (2.0 - delta)
    rng = np.random.default_rng(seed)
    lo, hi = float(t[0]) + 2.0, float(t[-1]) - 2.0

    def n_of(phi):
        d = [s.apply(phi) for s in st]
        sc = sc_from_derivs(problem.n, *(u + dd for u, dd in zip(ladder, d)))
        lin = sum(c * dd for c, dd in zip(coeffs, d))
        return sc - sc0 - lin

    worst = 0.0
    for _ in range(n_pairs):
        pair = []
        for _ in range(2):
            bump = GaussianBump(rng.uniform(lo, hi), rng.uniform(0.7, 1.6))
            v = bump(t)
            v = v * (scale / weighted_norm(t, v, 4, delta, rho, stencils=st))
            pair.append(v)
        p1, p2 = pair
        num = weighted_norm(t, n_of(p1) - n_of(p2), 0, delta - 4.0, rho,
                            stencils=st)
        den = ((weighted_norm(t, p1, 4, 2.0, rho, stencils=st)
                + weighted_norm(t, p2, 4, 2.0, rho, stencils=st))
               * weighted_norm(t, p1 - p2, 4, delta, rho, stencils=st))
        if den > 0.0:
            worst = max(worst, num / den)
    return worst
