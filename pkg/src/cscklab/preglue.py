r"""Pregluing: splice a resolution model into the tip of an outer model.

At scale lam the glued potential interpolates between the outer model and
the lam^2-scaled resolution across a neck at

    r_neck = lam^{2n/(2n+mu)},

the radius where the two deviation scales balance.  With chi a smoothstep
ramp in t supported on [t_neck, t_neck + width],

    u_lam = c e^t + off + chi f_outer + (1 - chi) c lam^2 g(t - 2 log lam),

where f_outer is the outer deviation from its cone and g the model's
potential gap.  Below the neck chi vanishes identically (not just
numerically), so the glued ladder there is the scaled model ladder up to
one rounding; at and above t_neck + width the outer callables are used
verbatim, making the glued potential bitwise equal to the outer one.

The scalar-curvature error profile is measured against the outer ladder's
own scalar curvature pushed through the identical float pipeline, which
makes the error exactly zero on the untouched region and leaves clean
power-law tails to fit elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .acmodels import ACResolutionModel
from .cutoffs import Ramp, smoothstep
from .errors import ConfigurationError, NumericalError
from .fitting import PowerLawFit, fit_power_law
from .outer import OuterModel
from .radial import AnalyticPotential, RadialPotential, sc_from_derivs

__all__ = [
    "CutoffSpec",
    "neck_radius",
    "GluedMetric",
    "glue",
    "ErrorProfile",
    "error_profile",
    "ThresholdReport",
    "positivity_threshold",
    "SweepRow",
    "sweep_rows",
    "neck_rate",
]


@dataclass(frozen=True)
class CutoffSpec:
    """Neck cutoff: a C^order smoothstep over a t-window of the given width."""

    order: int = 5
    width: float = 2.0 * math.log(2.0)

    def __post_init__(self):
        if self.order < 4:
            raise ConfigurationError("cutoff must be at least C^4 for a fourth-order operator")
        if not self.width > 0:
            raise ConfigurationError("cutoff width must be positive")

    def ramp(self, t_neck: float) -> Ramp:
        return smoothstep(self.order).on(t_neck, t_neck + self.width)


def neck_radius(lam: float, n: int, mu: float) -> float:
    """Balance radius lam^{2n/(2n+mu)} of the two deviation scales."""
    if not 0 < lam < 1:
        raise ConfigurationError("gluing scale lam must be in (0, 1)")
    return lam ** (2.0 * n / (2.0 * n + mu))


class _GluedForms:
    """Derivative ladder of the glued potential and its cone deviation."""

    def __init__(self, model: ACResolutionModel, outer: OuterModel,
                 lam: float, cutoff: CutoffSpec):
        self.model = model
        self.outer = outer
        self.lam = lam
        self.cutoff = cutoff
        self.n = outer.n
        self.cc = outer.cone_coef
        self.off = outer.cone_offset
        self.t_neck = 2.0 * math.log(neck_radius(lam, outer.n, outer.mu))
        self.t_upper = self.t_neck + cutoff.width
        self.chi = cutoff.ramp(self.t_neck)
        self.shift = 2.0 * math.log(lam)
        g = model.gap_fn
        self._gap = (g.u, g.d1, g.d2, g.d3, g.d4)
        d = outer.dev_fn
        self._odev = (d.u, d.d1, d.d2, d.d3, d.d4)

    def _chi_d(self, t, i: int):
        if i == 0:
            return self.chi(t)
        return self.chi.derivative(t, i)

    def _gap_k(self, t, k: int):
        t = np.asarray(t)
        lam2 = np.asarray(self.lam, dtype=t.dtype) ** 2
        return self.cc * lam2 * self._gap[k](t - self.shift)

    def dev_k(self, t, k: int):
        """k-th derivative of u_lam - (c e^t + off), blended formula."""
        t = np.asarray(t)
        total = self._gap_k(t, k)
        for i in range(k + 1):
            diff = self._odev[k - i](t) - self._gap_k(t, k - i)
            total = total + math.comb(k, i) * self._chi_d(t, i) * diff
        return total

    def u_k(self, t, k: int):
        t = np.asarray(t)
        outer_side = (self.outer.fn.u, self.outer.fn.d1, self.outer.fn.d2,
                      self.outer.fn.d3, self.outer.fn.d4)[k](t)
        cone = self.cc * np.exp(t)
        if k == 0:
            cone = cone + self.off
        inner_side = cone + self.dev_k(t, k)
        return np.where(t >= self.t_upper, outer_side, inner_side)

    def dev_full_k(self, t, k: int):
        """Deviation ladder with the bitwise outer branch above the neck."""
        t = np.asarray(t)
        return np.where(t >= self.t_upper, self._odev[k](np.asarray(t)),
                        self.dev_k(t, k))


@dataclass
class GluedMetric:
    """The glued radial potential at scale lam, with its region geometry."""

    lam: float
    model: ACResolutionModel
    outer: OuterModel
    cutoff: CutoffSpec
    t_neck: float
    t_upper: float
    fn: AnalyticPotential
    dev_fn: AnalyticPotential
    profile: RadialPotential
    margin: float
    forms: _GluedForms = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.outer.n

    @property
    def m(self) -> int:
        return self.outer.m

    @property
    def cone_coef(self) -> float:
        return self.outer.cone_coef

    @property
    def cone_offset(self) -> float:
        return self.outer.cone_offset

    @property
    def target_sc(self):
        return self.outer.target_sc

    @property
    def q_t(self) -> float:
        return self.outer.q_t

    @property
    def r_neck(self) -> float:
        return math.exp(self.t_neck / 2.0)

    def region_masks(self, t) -> dict[str, np.ndarray]:
        t = np.asarray(t)
        a = t >= self.t_upper
        c = t < self.t_neck
        return {"A": a, "B": ~a & ~c, "C": c}

    def weight(self, t) -> np.ndarray:
        """Gluing weight rho: lam below r = lam, r in the middle, 1/2 cap.

        Interpolated by a smoothstep on [lam, 2 lam] so it stays C^order.
        """
        t = np.asarray(t)
        r = np.exp(t / 2.0)
        lam = self.lam
        s = smoothstep(self.cutoff.order)
        y = np.clip((r - lam) / lam, 0.0, 1.0)
        low = lam + (r - lam) * s(y)
        rho = np.where(r <= 2.0 * lam, low, r)
        return np.minimum(rho, 0.5)


def glue(model: ACResolutionModel, outer: OuterModel, lam: float,
         cutoff: CutoffSpec | None = None, spacing: float = 0.02) -> GluedMetric:
    """Construct the glued potential at scale lam on a uniform union grid.

    Positivity is not enforced here; the returned metric carries the
    pointwise positivity margin (min of u', u'' against the cone scale over
    the modified region), and downstream consumers raise on margin <= 0.
    """
    if model.n != outer.n:
        raise ConfigurationError("model and outer dimension mismatch")
    cutoff = cutoff or CutoffSpec()
    forms = _GluedForms(model, outer, lam, cutoff)
    if forms.t_upper > 2.0 * math.log(0.5):
        raise ConfigurationError(
            f"lam={lam:g} puts the neck at r={math.exp(forms.t_neck / 2):.3f}, "
            "inside the weight-cap region")
    t_bot = model.profile.t[0] + forms.shift
    t_top = outer.profile.t[-1]
    points = int(round((t_top - t_bot) / spacing)) + 1
    t = np.linspace(t_bot, t_top, points)

    fn = AnalyticPotential(
        u=lambda s: forms.u_k(s, 0), d1=lambda s: forms.u_k(s, 1),
        d2=lambda s: forms.u_k(s, 2), d3=lambda s: forms.u_k(s, 3),
        d4=lambda s: forms.u_k(s, 4),
        label=f"glued(lam={lam:g})",
    )
    dev = AnalyticPotential(
        u=lambda s: forms.dev_full_k(s, 0), d1=lambda s: forms.dev_full_k(s, 1),
        d2=lambda s: forms.dev_full_k(s, 2), d3=lambda s: forms.dev_full_k(s, 3),
        d4=lambda s: forms.dev_full_k(s, 4),
        label=f"glued-dev(lam={lam:g})",
    )
    # positivity margin relative to the cone scale, over the modified region
    tm = t[t <= forms.t_upper + 1.0]
    cone = forms.cc * np.exp(tm)
    margin = float(min(np.min(fn.d1(tm) / cone), np.min(fn.d2(tm) / cone)))

    profile = RadialPotential.from_fn(fn, n=outer.n, t=t, m=outer.m)
    return GluedMetric(
        lam=lam, model=model, outer=outer, cutoff=cutoff,
        t_neck=forms.t_neck, t_upper=forms.t_upper, fn=fn, dev_fn=dev,
        profile=profile, margin=margin, forms=forms,
    )


@dataclass
class ErrorProfile:
    """Pointwise scalar-curvature error of a glued metric and its norms."""

    t: np.ndarray
    eps: np.ndarray
    delta: float
    weight: np.ndarray
    norms: dict[str, float]
    masks: dict[str, np.ndarray]


def error_profile(glued: GluedMetric, delta: float) -> ErrorProfile:
    """Sc(u_lam) minus the outer ladder's Sc, in the weighted (0, delta-4) norm.

    Both scalar curvatures go through the same float pipeline, so the error
    vanishes bitwise where the glued ladder is the outer one.
    """
    t = glued.profile.t
    sc_glued = sc_from_derivs(glued.n, *glued.fn.ladder(t))
    sc_target = sc_from_derivs(glued.n, *glued.outer.fn.ladder(t))
    eps = sc_glued - sc_target
    rho = glued.weight(t)
    w = rho ** (4.0 - delta) * np.abs(eps)
    masks = glued.region_masks(t)
    norms = {k: float(np.max(w[v])) if np.any(v) else 0.0
             for k, v in masks.items()}
    norms["total"] = float(np.max(w))
    return ErrorProfile(t=t, eps=eps, delta=delta, weight=rho,
                        norms=norms, masks=masks)


@dataclass
class ThresholdReport:
    """Largest gluing scale with a positive glued metric."""

    lam0: float
    bracket: tuple[float, float]
    all_positive: bool
    evaluations: list[tuple[float, float]]


def positivity_threshold(model: ACResolutionModel, outer: OuterModel,
                         lam_hi: float | None = None, lam_lo: float = 2e-3,
                         cutoff: CutoffSpec | None = None,
                         rel_tol: float = 0.02) -> ThresholdReport:
    """Scan lam downward for the positivity threshold of the glued metric.

    Returns the largest lam whose glued ladder keeps u', u'' positive,
    bisected in log lam to rel_tol.  all_positive means the metric stayed
    positive all the way up to the construction cap (neck below the weight
    cap), in which case lam0 is that cap.
    """
    cutoff = cutoff or CutoffSpec()
    theta = 2.0 * outer.n / (2.0 * outer.n + outer.mu)
    # largest constructible lam: t_upper = 2 log(0.5)
    cap = math.exp((2.0 * math.log(0.5) - cutoff.width) / (2.0 * theta)) * 0.999
    start = min(lam_hi, cap) if lam_hi is not None else cap
    evals: list[tuple[float, float]] = []

    def margin_at(lam: float) -> float:
        g = glue(model, outer, lam, cutoff=cutoff)
        evals.append((lam, g.margin))
        return g.margin

    lam = start
    pos, neg = None, None
    while lam >= lam_lo:
        if margin_at(lam) > 0.0:
            pos = lam
            break
        neg = lam
        lam /= math.sqrt(2.0)
    if pos is None:
        raise NumericalError("no positive glued metric found above lam_lo",
                             diagnostics={"evaluations": evals})
    if neg is None:
        return ThresholdReport(lam0=pos, bracket=(pos, cap),
                               all_positive=True, evaluations=evals)
    lo, hi = pos, neg
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if margin_at(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return ThresholdReport(lam0=lo, bracket=(lo, hi), all_positive=False,
                           evaluations=evals)


@dataclass
class SweepRow:
    """Per-lambda summary of the glued geometry and its error norms."""

    lam: float
    r_neck: float
    margin: float
    err_A: float
    err_B: float
    err_C: float
    err_total: float
    dev_neck: float


def sweep_rows(model: ACResolutionModel, outer: OuterModel,
               lambdas: list[float], delta: float,
               cutoff: CutoffSpec | None = None) -> list[SweepRow]:
    """Glue at each lambda and collect error norms and the neck deviation.

    dev_neck is the outer metric's deviation from its cone at the neck
    scale, measured at curvature-relevant order (second t-derivative of the
    deviation potential, ~ r^{2+mu}); fitting it against r_neck across the
    sweep recovers the cone-convergence rate mu + 2 without the fixed-grid
    contamination a within-geometry fit would pick up from next-order terms.
    """
    if not lambdas:
        raise ConfigurationError("lambda list must be non-empty")
    rows = []
    for lam in sorted(set(float(x) for x in lambdas), reverse=True):
        g = glue(model, outer, lam, cutoff=cutoff)
        prof = error_profile(g, delta)
        dev_neck = float(np.abs(outer.dev_fn.d2(np.asarray(g.t_neck))))
        rows.append(SweepRow(
            lam=lam, r_neck=g.r_neck, margin=g.margin,
            err_A=prof.norms["A"], err_B=prof.norms["B"],
            err_C=prof.norms["C"], err_total=prof.norms["total"],
            dev_neck=dev_neck,
        ))
    return rows


def neck_rate(rows: list[SweepRow]) -> PowerLawFit:
    """Fit dev_neck against r_neck across a sweep; the slope targets mu + 2."""
    r = np.array([row.r_neck for row in rows])
    d = np.array([row.dev_neck for row in rows])
    return fit_power_law(r, d)
