r"""Outer (compact-side) radial models and the cone surgery.

An OuterModel is a radial profile on a finite t-window whose bottom end is
asymptotic to an exact cone c e^t + const, together with the data the glue
and solve stages need: the deviation ladder f = u - cone with four
derivatives, the scalar-curvature target, the decay exponent mu of the
deviation (|f| ~ r^{mu+2} as r -> 0), the top closure type, and the
base-point location.

Three built-in families:

  * fubini_study_cap: u = log(1 + e^t), the round metric with its smooth
    top cap; Sc = n(n+1) exactly, mu = 2.
  * manufactured_cap: u = e^t + c e^{(1+mu/2) t} R(t) with a smooth
    roll-off R near the top; target is the analytic Sc of that ladder,
    closed with Dirichlet conditions.  Exercises arbitrary mu in (0, 2].
  * truncated_cone: u = e^t on a window, target 0.

conify() performs the surgery that replaces the bottom of an outer model
by an exact cone of slope eps^2: the potential is flattened through a
smoothstep primitive composed with u itself,

    tau(s) = s2 + int_{s2}^{s} S((sigma - s1)/(s2 - s1)) d sigma,

so tau(u) == u identically above delta1 and is constant below delta3, and
a cone piece eps^2 (1 - chi) e^t is blended in below.  Composing in the
s-variable keeps u_new - u exactly zero (bitwise) on the untouched region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cutoffs import smoothstep
from .errors import ConfigurationError, PositivityError
from .fitting import RateReport, fit_power_law
from .radial import AnalyticPotential, RadialPotential, flat_fn, sc_from_derivs

__all__ = [
    "OuterModel",
    "SurgeryConfig",
    "PositivityCertificate",
    "fubini_study_cap",
    "manufactured_cap",
    "truncated_cone",
    "conify",
    "asymptotic_rate",
]

CLOSURES = ("dirichlet", "smooth_cap")

_DEFAULT_WINDOW = (-26.0, 12.0)
_DEFAULT_SPACING = 0.02


@dataclass
class OuterModel:
    """Compact-side model: profile, cone data, deviation ladder, target."""

    n: int
    profile: RadialPotential
    fn: AnalyticPotential
    dev_fn: AnalyticPotential
    target_sc: float | Callable
    mu: float
    closure: str
    cone_coef: float = 1.0
    cone_offset: float = 0.0
    q_t: float = 0.0
    u1_limit_top: float | None = None
    m: int = 1
    label: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.closure not in CLOSURES:
            raise ConfigurationError(f"closure must be one of {CLOSURES}")
        if not 0.0 < self.mu <= 2.0:
            raise ConfigurationError(
                f"deviation rate mu={self.mu} outside the supported range (0, 2]")
        t = self.profile.t
        if not t[0] < self.q_t < t[-1]:
            raise ConfigurationError("base point q_t must lie inside the window")

    @property
    def is_constant_target(self) -> bool:
        return not callable(self.target_sc)

    def target_values(self, t) -> np.ndarray:
        t = np.asarray(t)
        if callable(self.target_sc):
            return np.asarray(self.target_sc(t))
        return np.full_like(t, self.target_sc, dtype=t.dtype)

    @property
    def q_index(self) -> int:
        return int(np.argmin(np.abs(self.profile.t - self.q_t)))

    @property
    def t_window(self) -> tuple[float, float]:
        t = self.profile.t
        return float(t[0]), float(t[-1])


def _window_grid(grid) -> np.ndarray:
    if grid is None:
        t_min, t_max = _DEFAULT_WINDOW
        points = int(round((t_max - t_min) / _DEFAULT_SPACING)) + 1
        return np.linspace(t_min, t_max, points)
    if isinstance(grid, tuple):
        t_min, t_max, points = grid
        if not (t_max > t_min and points >= 16):
            raise ConfigurationError("grid spec needs t_max > t_min and >= 16 points")
        return np.linspace(float(t_min), float(t_max), int(points))
    return np.asarray(grid, dtype=float)


# ---------------------------------------------------------------------------
# Fubini-Study cap


class _FSForms:
    """Ladder of u = log(1 + e^t) through the logistic sigma = u'."""

    @staticmethod
    def u(t):
        t = np.asarray(t)
        return np.logaddexp(np.asarray(0.0, dtype=t.dtype), t)

    @staticmethod
    def _sigma(t):
        t = np.asarray(t)
        return 1.0 / (1.0 + np.exp(-t))

    def u1(self, t):
        return self._sigma(t)

    def u2(self, t):
        s = self._sigma(t)
        return s * (1.0 - s)

    def u3(self, t):
        s = self._sigma(t)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    def u4(self, t):
        s = self._sigma(t)
        return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)

    # deviation f = log(1+x) - x in x = e^t; rational forms are
    # cancellation-free, the value needs a short series at small x
    @staticmethod
    def f(t):
        t = np.asarray(t)
        x = np.exp(t)
        series = -x * x * (
            1.0 / 2.0 - x * (1.0 / 3.0 - x * (1.0 / 4.0 - x * (
                1.0 / 5.0 - x * (1.0 / 6.0 - x * (1.0 / 7.0 - x * (
                    1.0 / 8.0 - x / 9.0))))))
        )
        return np.where(x < 1e-4, series, np.log1p(x) - x)

    @staticmethod
    def f1(t):
        x = np.exp(np.asarray(t))
        return -x * x / (1.0 + x)

    @staticmethod
    def f2(t):
        x = np.exp(np.asarray(t))
        return -x * x * (2.0 + x) / (1.0 + x) ** 2

    @staticmethod
    def f3(t):
        x = np.exp(np.asarray(t))
        return -x * x * (4.0 + 3.0 * x + x * x) / (1.0 + x) ** 3

    @staticmethod
    def f4(t):
        x = np.exp(np.asarray(t))
        return -x * x * (8.0 + x * (5.0 + x * (4.0 + x))) / (1.0 + x) ** 4


def fubini_study_cap(n: int, grid=None, m: int = 1) -> OuterModel:
    """Round cap: u = log(1 + e^t), Sc identically n(n+1)."""
    forms = _FSForms()
    fn = AnalyticPotential(u=forms.u, d1=forms.u1, d2=forms.u2,
                           d3=forms.u3, d4=forms.u4, label="fs")
    dev = AnalyticPotential(u=forms.f, d1=forms.f1, d2=forms.f2,
                            d3=forms.f3, d4=forms.f4, label="fs-dev")
    t = _window_grid(grid)
    profile = RadialPotential.from_fn(fn, n=n, t=t, m=m)
    return OuterModel(
        n=n, profile=profile, fn=fn, dev_fn=dev,
        target_sc=float(n * (n + 1)), mu=2.0, closure="smooth_cap",
        cone_coef=1.0, cone_offset=0.0, u1_limit_top=1.0, m=m, label="fs",
    )


# ---------------------------------------------------------------------------
# Manufactured caps and the truncated cone


class _ManufacturedForms:
    """u = e^t + c e^{beta t} R(t), R = 1 - S((t - t_roll)/w)."""

    def __init__(self, beta: float, c: float, t_roll: float, w: float):
        self.beta = beta
        self.c = c
        self.ramp = smoothstep(5).on(t_roll, t_roll + w)

    def envelope(self, t, k: int):
        """k-th derivative of e^{beta t} R(t)."""
        t = np.asarray(t)
        e = np.exp(self.beta * t)
        total = np.zeros_like(e)
        for i in range(k + 1):
            if i == 0:
                r = 1.0 - self.ramp(t)
            else:
                r = -self.ramp.derivative(t, i)
            total = total + math.comb(k, i) * self.beta ** (k - i) * r
        return e * total

    def _u_k(self, t, k: int):
        t = np.asarray(t)
        return np.exp(t) + self.c * self.envelope(t, k)

    def u(self, t):
        return self._u_k(t, 0)

    def u1(self, t):
        return self._u_k(t, 1)

    def u2(self, t):
        return self._u_k(t, 2)

    def u3(self, t):
        return self._u_k(t, 3)

    def u4(self, t):
        return self._u_k(t, 4)

    def dev(self, t, k: int):
        return self.c * self.envelope(t, k)


def manufactured_cap(n: int, mu: float, c: float, grid=None, m: int = 1,
                     t_roll: float | None = None, w: float = 1.0) -> OuterModel:
    """Cone plus an exact power deviation c r^{mu+2}, rolled off near the top.

    The target is the analytic scalar curvature of that ladder, so a solve
    against this model has a known zero (phi = 0).  Closed with Dirichlet
    conditions; the roll-off makes the potential exactly conical at the top.

    Default window as for the truncated cone: the deviation envelope grows
    like e^{beta t} against the cone's e^t, so a far cap would force c into
    uselessly small amplitudes.
    """
    if not 0.0 < mu <= 2.0:
        raise ConfigurationError(f"mu={mu} outside the supported range (0, 2]")
    t = _window_grid(grid if grid is not None else (-26.0, 4.0, 1501))
    if t_roll is None:
        t_roll = float(t[-1]) - 2.0
    if not (t[0] < t_roll and t_roll + w <= t[-1]):
        raise ConfigurationError("roll-off window must sit inside the grid")
    beta = 1.0 + mu / 2.0
    forms = _ManufacturedForms(beta, c, t_roll, w)

    # max |c| keeping u', u'' positive: the cone part floors both at e^t
    c_max = math.inf
    for k in (1, 2):
        mag = np.abs(forms.envelope(t, k))
        pos = mag > 0
        if np.any(pos):
            c_max = min(c_max, float(np.min(np.exp(t[pos]) / mag[pos])))

    fn = AnalyticPotential(
        u=forms.u, d1=forms.u1, d2=forms.u2, d3=forms.u3, d4=forms.u4,
        label=f"manufactured(mu={mu:g},c={c:g})",
    )
    dev = AnalyticPotential(
        u=lambda s: forms.dev(s, 0), d1=lambda s: forms.dev(s, 1),
        d2=lambda s: forms.dev(s, 2), d3=lambda s: forms.dev(s, 3),
        d4=lambda s: forms.dev(s, 4), label="manufactured-dev",
    )

    def target(s, _fn=fn, _n=n):
        return sc_from_derivs(_n, *_fn.ladder(s))

    try:
        profile = RadialPotential.from_fn(fn, n=n, t=t, m=m)
    except PositivityError as exc:
        exc.diagnostics["c_max"] = c_max
        raise
    model = OuterModel(
        n=n, profile=profile, fn=fn, dev_fn=dev, target_sc=target,
        mu=float(mu), closure="dirichlet", cone_coef=1.0, cone_offset=0.0,
        m=m, label=fn.label,
    )
    model.diagnostics["c_max"] = c_max
    if abs(c) >= c_max:
        raise PositivityError(
            f"deviation amplitude |c|={abs(c):g} reaches the positivity bound",
            diagnostics={"c_max": c_max},
        )
    return model


def truncated_cone(n: int, grid=None, m: int = 1, mu: float = 2.0) -> OuterModel:
    """Exact cone u = e^t on a finite window; target Sc = 0.

    The default window stops at t = 4 (r ~ 7.4): a scalar-flat solve pins
    Sc to the tiny point-term constant, and the log-determinant's response
    to a constant grows like e^t, so a far larger cone would just amplify
    that response against the flatness check without testing anything new.
    """
    fn = flat_fn()
    zero = AnalyticPotential(u=np.zeros_like, d1=np.zeros_like, d2=np.zeros_like,
                             d3=np.zeros_like, d4=np.zeros_like, label="zero")
    t = _window_grid(grid if grid is not None else (-26.0, 4.0, 1501))
    profile = RadialPotential.from_fn(fn, n=n, t=t, m=m)
    return OuterModel(
        n=n, profile=profile, fn=fn, dev_fn=zero, target_sc=0.0, mu=mu,
        closure="dirichlet", cone_coef=1.0, cone_offset=0.0, m=m,
        label="truncated-cone",
    )


# ---------------------------------------------------------------------------
# Cone surgery


@dataclass(frozen=True)
class SurgeryConfig:
    """Radii and cone slope for conify: exact cone below delta3, untouched
    outer above max(delta1, 2 delta3), gluing serviced below delta2."""

    delta1: float
    delta2: float
    delta3: float
    eps: float

    @classmethod
    def for_radii(cls, delta3: float, eps: float) -> "SurgeryConfig":
        return cls(delta1=2.0 * delta3, delta2=delta3 / 4.0, delta3=delta3, eps=eps)

    def validate(self) -> None:
        d1, d2, d3 = self.delta1, self.delta2, self.delta3
        if not (0.0 < 2.0 * d2 < min(d1, d3)):
            raise ConfigurationError(
                "surgery radii must satisfy 0 < 2*delta2 < min(delta1, delta3)")
        if not d3 <= d1:
            raise ConfigurationError("delta3 <= delta1 required")
        if max(2.0 * d3, d1) > 0.5:
            raise ConfigurationError("surgery region must stay below r = 1/2")
        if not self.eps > 0:
            raise ConfigurationError("cone slope eps must be positive")

    @property
    def t_lo(self) -> float:
        return 2.0 * math.log(self.delta3)

    @property
    def t_hi(self) -> float:
        return 2.0 * math.log(max(2.0 * self.delta3, self.delta1))


@dataclass(frozen=True)
class PositivityCertificate:
    """Outcome of the conified-ladder positivity check."""

    ok: bool
    eps_max: float
    margin_u1: float
    margin_u2: float
    region: tuple[float, float]


class _ConifiedForms:
    """Ladder of eps^2 (1 - chi) e^t + tau(u) and of its cone deviation."""

    def __init__(self, outer: OuterModel, cfg: SurgeryConfig):
        self.outer = outer
        self.cfg = cfg
        self.eps2 = cfg.eps ** 2
        step = smoothstep(5)
        self.chi = step.on(cfg.t_lo, cfg.t_lo + 2.0 * math.log(2.0))
        self.s1 = float(outer.fn.u(np.asarray(cfg.t_lo)))
        self.s2 = float(outer.fn.u(np.asarray(2.0 * math.log(cfg.delta1))))
        if not self.s2 > self.s1:
            raise ConfigurationError("outer potential not increasing across surgery radii")
        self.delta = self.s2 - self.s1
        self.step = step
        self.ramp = step.on(self.s1, self.s2)
        self.plateau = self.s2 - 0.5 * self.delta

    # cone-piece k-th derivative divided by eps^2: e^t [(1-chi) - sum binom chi^(i)]
    def _cone_part(self, t, k: int):
        t = np.asarray(t)
        total = 1.0 - self.chi(t)
        for i in range(1, k + 1):
            total = total - math.comb(k, i) * self.chi.derivative(t, i)
        return np.exp(t) * total

    def _tau_derivs(self, s):
        """(tau', tau'', tau''', tau'''') at s."""
        return (self.ramp(s), self.ramp.derivative(s, 1),
                self.ramp.derivative(s, 2), self.ramp.derivative(s, 3))

    def _tau_value(self, s):
        s = np.asarray(s)
        y = (s - self.s1) / self.delta
        inner = self.s2 + self.delta * (self.step.antiderivative(y) - 0.5)
        # bitwise identity above s2: return the untouched potential there
        return np.where(y >= 1.0, s, inner)

    def u(self, t):
        t = np.asarray(t)
        return self.eps2 * self._cone_part(t, 0) + self._tau_value(self.outer.fn.u(t))

    def _composed(self, t, k: int):
        o = self.outer.fn
        s = o.u(t)
        t1, t2, t3, t4 = self._tau_derivs(s)
        u1 = o.d1(t)
        if k == 1:
            return t1 * u1
        u2 = o.d2(t)
        if k == 2:
            return t2 * u1 * u1 + t1 * u2
        u3 = o.d3(t)
        if k == 3:
            return t3 * u1**3 + 3.0 * t2 * u1 * u2 + t1 * u3
        u4 = o.d4(t)
        return (t4 * u1**4 + 6.0 * t3 * u1 * u1 * u2
                + t2 * (3.0 * u2 * u2 + 4.0 * u1 * u3) + t1 * u4)

    def u1(self, t):
        return self.eps2 * self._cone_part(t, 1) + self._composed(t, 1)

    def u2(self, t):
        return self.eps2 * self._cone_part(t, 2) + self._composed(t, 2)

    def u3(self, t):
        return self.eps2 * self._cone_part(t, 3) + self._composed(t, 3)

    def u4(self, t):
        return self.eps2 * self._cone_part(t, 4) + self._composed(t, 4)

    # deviation from the new cone eps^2 e^t + plateau; identically zero
    # below delta3 without any masking
    def dev(self, t):
        t = np.asarray(t)
        s = self.outer.fn.u(t)
        y = (s - self.s1) / self.delta
        mid = self.delta * self.step.antiderivative(y) - self.eps2 * self.chi(t) * np.exp(t)
        top = s - self.eps2 * np.exp(t) - self.plateau
        return np.where(y >= 1.0, top, mid)

    def _dev_k(self, t, k: int):
        t = np.asarray(t)
        cone_extra = self._cone_part(t, k) - np.exp(t)
        return self.eps2 * cone_extra + self._composed(t, k)

    def dev1(self, t):
        return self._dev_k(t, 1)

    def dev2(self, t):
        return self._dev_k(t, 2)

    def dev3(self, t):
        return self._dev_k(t, 3)

    def dev4(self, t):
        return self._dev_k(t, 4)

    def certificate(self, spacing: float = 0.002) -> PositivityCertificate:
        lo, hi = self.cfg.t_lo - 2.0, self.cfg.t_hi + 0.5
        t = np.linspace(lo, hi, int(round((hi - lo) / spacing)) + 1)
        eps2_max = math.inf
        for k in (1, 2):
            ck = self._cone_part(t, k)
            bk = self._composed(t, k)
            neg = ck < 0
            if np.any(neg):
                eps2_max = min(eps2_max, float(np.min(bk[neg] / (-ck[neg]))))
        m1 = float(np.min(self.u1(t)))
        m2 = float(np.min(self.u2(t)))
        return PositivityCertificate(
            ok=m1 > 0.0 and m2 > 0.0,
            eps_max=math.sqrt(eps2_max) if eps2_max < math.inf else math.inf,
            margin_u1=m1, margin_u2=m2, region=(lo, hi),
        )


def conify(outer: OuterModel, cfg: SurgeryConfig) -> OuterModel:
    """Replace the bottom of an outer model by an exact eps^2-slope cone.

    The returned model agrees with the input bitwise above
    max(delta1, 2 delta3) and equals eps^2 e^t + const exactly below
    delta3.  Its target is the analytic scalar curvature of the modified
    ladder, which coincides with the original target on the untouched
    region.  Raises PositivityError when eps exceeds the certified bound.
    """
    cfg.validate()
    if outer.cone_coef != 1.0 or outer.cone_offset != 0.0:
        raise ConfigurationError("conify expects an unconified outer model")
    if cfg.t_hi >= outer.q_t:
        raise ConfigurationError("surgery region must stay below the base point")
    forms = _ConifiedForms(outer, cfg)
    cert = forms.certificate()
    if not cert.ok or cfg.eps >= cert.eps_max:
        raise PositivityError(
            "conified ladder loses positivity at this eps",
            diagnostics={"eps_max": cert.eps_max, "margin_u1": cert.margin_u1,
                         "margin_u2": cert.margin_u2},
        )
    fn = AnalyticPotential(u=forms.u, d1=forms.u1, d2=forms.u2, d3=forms.u3,
                           d4=forms.u4, label=outer.label + "+cone")
    dev = AnalyticPotential(u=forms.dev, d1=forms.dev1, d2=forms.dev2,
                            d3=forms.dev3, d4=forms.dev4,
                            label=outer.label + "+cone-dev")

    def target(s, _fn=fn, _n=outer.n):
        return sc_from_derivs(_n, *_fn.ladder(s))

    profile = RadialPotential.from_fn(fn, n=outer.n, t=outer.profile.t,
                                      m=outer.m)
    model = OuterModel(
        n=outer.n, profile=profile, fn=fn, dev_fn=dev, target_sc=target,
        mu=outer.mu, closure=outer.closure, cone_coef=forms.eps2,
        cone_offset=forms.plateau, q_t=outer.q_t,
        u1_limit_top=outer.u1_limit_top, m=outer.m,
        label=outer.label + "+cone",
    )
    model.diagnostics["positivity"] = cert
    model.diagnostics["surgery"] = cfg
    return model


# ---------------------------------------------------------------------------
# Asymptotic rates


def asymptotic_rate(outer: OuterModel, k: int = 0, which: str = "potential",
                    window: tuple[float, float] = (1e-4, 1e-1)) -> RateReport:
    """Fit the decay rate of the cone deviation near the tip.

    which="potential" fits r^{-k} |f^(k)| (expected slope mu + 2 - k);
    which="metric" fits the same at derivative order k + 2, the level at
    which the deviation enters the metric coefficients.  A deviation that
    vanishes identically over the window is reported exact instead.
    """
    if which not in ("potential", "metric"):
        raise ConfigurationError("which must be 'potential' or 'metric'")
    j = k if which == "potential" else k + 2
    if not 0 <= j <= 4:
        raise ConfigurationError("derivative order out of ladder range")
    r_lo, r_hi = window
    t = outer.profile.t
    mask = (t >= 2.0 * math.log(r_lo)) & (t <= 2.0 * math.log(r_hi))
    if np.count_nonzero(mask) < 8:
        raise ConfigurationError("fit window misses the grid")
    tm = t[mask]
    r = np.exp(tm / 2.0)
    ladder = (outer.dev_fn.u, outer.dev_fn.d1, outer.dev_fn.d2,
              outer.dev_fn.d3, outer.dev_fn.d4)
    data = np.abs(ladder[j](tm)) * r ** (-float(j))
    if float(np.max(data)) == 0.0:
        return RateReport(exponent=None, fit=None, exact=True, window=window,
                          quantity=f"{which}[{k}]")
    fit = fit_power_law(r, data)
    return RateReport(exponent=fit.exponent, fit=fit, exact=False,
                      window=window, quantity=f"{which}[{k}]")
