r"""Resolution models with asymptotically conical Ricci-flat metrics.

The built-in family comes from the Calabi ansatz on the total space of
O(-n) over P^{n-1}, resolving C^n / Z_n.  The Ricci-flat ODE
(u')^{n-1} u'' = e^{nt} integrates in closed form:

    u'(t) = (e^{nt} + a^{2n})^{1/n},

with a > 0 the size of the exceptional set (u' -> a^2 as t -> -infty).
Everything downstream works off this closed form: the full derivative
ladder, the potential gap g = u - e^t (quadrature constant fixed so that
g -> 0 at +infty), and cancellation-free expressions for the gap
derivatives, which make decay-rate fits clean over many decades.

In the smallness variable x = a^{2n} e^{-nt}, with L = log1p(x):

    u'   = exp(t + L/n)                       u''  = u' / (1+x)
    g'   = e^t expm1(L/n)                     g''  = e^t expm1((1/n-1) L)
    g''' = e^t [expm1((1/n-2) L) + n x e^{(1/n-2) L}]
    g'''' = e^t [expm1((1/n-3) L) + e^{(1/n-3) L} n x ((3-n) + n x)]

and the gap value has the series g = -e^t sum_j C(1/n, j) x^j / (jn - 1)
for x <= 1/2, continued by quadrature of g' below that.  All callables
preserve the input float dtype; the solver re-evaluates them in long
double during its residual polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, NumericalError
from .fitting import PowerLawFit, fit_power_law
from .radial import (
    AnalyticPotential,
    RadialPotential,
    flat_fn,
    link_volume_constant,
    log_det_from,
    sc_from_derivs,
)

__all__ = [
    "CalabiForms",
    "ACResolutionModel",
    "calabi_resolution",
    "flat_model",
    "decay_rate",
    "cy_residual",
    "identity_deviation",
    "volume_excess_coefficient",
]

# Series cutoff for the gap value; terms decay at least like 2^{-j}.
_GAP_SERIES_TERMS = 80
_GAP_SERIES_MAX_X = 0.5

# 24-point Gauss-Legendre on panels of length <= 1 is far below long-double
# rounding for these integrands.
_QUAD_NODES, _QUAD_WEIGHTS = np.polynomial.legendre.leggauss(24)


class CalabiForms:
    """Closed-form derivative ladder of the Calabi resolution potential."""

    def __init__(self, n: int, a: float):
        if n < 2:
            raise ConfigurationError("complex dimension n must be >= 2")
        if not a > 0:
            raise ConfigurationError("exceptional-set size a must be positive")
        self.n = int(n)
        self.a = float(a)
        # t at which x = 1/2: series/quadrature split for the gap value
        self.t_split = 2.0 * math.log(self.a) + math.log(2.0) / self.n

    # -- helpers ---------------------------------------------------------

    def _x(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t)
        la = np.log(np.asarray(self.a, dtype=t.dtype))
        return np.exp(-self.n * (t - 2.0 * la))

    # -- potential ladder ------------------------------------------------

    def u1(self, t):
        t = np.asarray(t)
        return np.exp(t + np.log1p(self._x(t)) / self.n)

    def u2(self, t):
        t = np.asarray(t)
        x = self._x(t)
        return np.exp(t + np.log1p(x) / self.n) / (1.0 + x)

    def u3(self, t):
        t = np.asarray(t)
        n = self.n
        w = 1.0 / (1.0 + self._x(t))
        return self.u2(t) * (n - (n - 1) * w)

    def u4(self, t):
        t = np.asarray(t)
        n = self.n
        x = self._x(t)
        w = 1.0 / (1.0 + x)
        xw = x * w  # = 1 - w without cancellation at small x
        u2 = self.u2(t)
        c = n - (n - 1) * w
        return u2 * (c * c - n * (n - 1) * w * xw)

    def u(self, t):
        t = np.asarray(t)
        return np.exp(t) + self.g(t)

    # -- potential gap ladder (g = u - e^t) ------------------------------

    def g1(self, t):
        t = np.asarray(t)
        return np.exp(t) * np.expm1(np.log1p(self._x(t)) / self.n)

    def g2(self, t):
        t = np.asarray(t)
        return np.exp(t) * np.expm1((1.0 / self.n - 1.0) * np.log1p(self._x(t)))

    def g3(self, t):
        t = np.asarray(t)
        n = self.n
        x = self._x(t)
        c = 1.0 / n - 2.0
        L = np.log1p(x)
        return np.exp(t) * (np.expm1(c * L) + n * x * np.exp(c * L))

    def g4(self, t):
        t = np.asarray(t)
        n = self.n
        x = self._x(t)
        c = 1.0 / n - 3.0
        L = np.log1p(x)
        return np.exp(t) * (np.expm1(c * L) + np.exp(c * L) * n * x * ((3.0 - n) + n * x))

    def _g_series(self, t: np.ndarray) -> np.ndarray:
        x = self._x(t)
        n = self.n
        one = np.asarray(1.0, dtype=x.dtype)
        b = one / n                      # binom(1/n, 1)
        acc = b * x / (n - 1)
        xj = x.copy()
        for j in range(1, _GAP_SERIES_TERMS):
            b = b * (one / n - j) / (j + 1)
            xj = xj * x
            acc = acc + b * xj / ((j + 1) * n - 1)
        return -np.exp(np.asarray(t)) * acc

    def _g_quadrature(self, t_scalar: float, dtype) -> np.ndarray:
        """- integral of g' from t_scalar up to t_split, in the given dtype."""
        lo = np.asarray(t_scalar, dtype=dtype)
        hi = np.asarray(self.t_split, dtype=dtype)
        total = np.asarray(0.0, dtype=dtype)
        panels = max(1, int(math.ceil(float(hi - lo))))
        edges = np.linspace(lo, hi, panels + 1)
        for aa, bb in zip(edges[:-1], edges[1:]):
            half = (bb - aa) / 2.0
            mid = (bb + aa) / 2.0
            s = mid + half * _QUAD_NODES.astype(dtype)
            total = total + half * np.sum(_QUAD_WEIGHTS.astype(dtype) * self.g1(s))
        return -total

    def g(self, t):
        t = np.asarray(t)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty_like(t)
        x = self._x(t)
        easy = x <= _GAP_SERIES_MAX_X
        if np.any(easy):
            out[easy] = self._g_series(t[easy])
        if np.any(~easy):
            g_split = self._g_series(np.asarray([self.t_split], dtype=t.dtype))[0]
            deep = np.flatnonzero(~easy)
            for i in deep:
                out[i] = g_split + self._g_quadrature(float(t[i]), t.dtype)
        return out[0] if scalar else out

    # -- bundles ---------------------------------------------------------

    def potential_fn(self) -> AnalyticPotential:
        return AnalyticPotential(
            u=self.u, d1=self.u1, d2=self.u2, d3=self.u3, d4=self.u4,
            label=f"calabi(n={self.n},a={self.a:g})",
        )

    def gap_fn(self) -> AnalyticPotential:
        return AnalyticPotential(
            u=self.g, d1=self.g1, d2=self.g2, d3=self.g3, d4=self.g4,
            label=f"calabi-gap(n={self.n},a={self.a:g})",
        )


@dataclass
class ACResolutionModel:
    """A resolution model: profile, closed forms, and fitted decay rates.

    a == 0 encodes the degenerate flat cone (no exceptional set); forms and
    gap_fn are then the flat ladder and zero.
    """

    n: int
    a: float
    profile: RadialPotential
    nu_fitted: float | None
    potential_gap_rate: float | None
    forms: CalabiForms | None
    gap_fn: AnalyticPotential | None

    @property
    def is_flat(self) -> bool:
        return self.a == 0.0

    @property
    def fn(self) -> AnalyticPotential:
        return self.profile.fn


def _default_grid(n: int, a: float, spacing: float = 0.02) -> np.ndarray:
    # bottom: e^{n t_min} = 1e-6 a^{2n} (exceptional regime resolved);
    # top: e^{t_max} ~ 1.6e5 a^2, enough for two decades of clean gap fits.
    t_min = 2.0 * math.log(a) - 6.0 * math.log(10.0) / n
    t_max = 2.0 * math.log(a) + 12.0
    points = int(round((t_max - t_min) / spacing)) + 1
    return np.linspace(t_min, t_max, points)


def _resolve_grid(grid, n: int, a: float) -> np.ndarray:
    if grid is None:
        return _default_grid(n, a)
    if isinstance(grid, tuple):
        t_min, t_max, points = grid
        if not (t_max > t_min and points >= 16):
            raise ConfigurationError("grid spec needs t_max > t_min and >= 16 points")
        return np.linspace(float(t_min), float(t_max), int(points))
    return np.asarray(grid, dtype=float)


def identity_deviation(model: "ACResolutionModel") -> float:
    """Max relative defect of (u')^n - e^{nt} = a^{2n} over the grid.

    Relative to e^{nt} + a^{2n}: the difference of the two n-th powers is
    evaluated literally, so near the top the comparison is dominated by the
    rounding of e^{nt} itself and an absolute tolerance would be vacuous.
    """
    if model.is_flat:
        return 0.0
    t = model.profile.t
    u1 = model.profile.derivative(1)
    lhs = u1**model.n - np.exp(model.n * t)
    scale = np.exp(model.n * t) + model.a ** (2 * model.n)
    return float(np.max(np.abs(lhs - model.a ** (2 * model.n)) / scale))


def calabi_resolution(n: int, a: float, grid=None, m: int = 1,
                      fit: bool = True) -> ACResolutionModel:
    """Build the Calabi-ansatz resolution model of size a > 0.

    grid: None for defaults, (t_min, t_max, points), or an explicit array.
    m only affects volume bookkeeping of the profile.
    """
    forms = CalabiForms(n, a)
    t = _resolve_grid(grid, n, a)
    profile = RadialPotential.from_fn(forms.potential_fn(), n=n, t=t, m=m)
    model = ACResolutionModel(
        n=n, a=float(a), profile=profile, nu_fitted=None,
        potential_gap_rate=None, forms=forms, gap_fn=forms.gap_fn(),
    )
    dev = identity_deviation(model)
    if dev > 1e-10:
        raise NumericalError(
            "closed-form identity check failed on this grid",
            diagnostics={"identity_deviation": dev},
        )
    if fit:
        model.potential_gap_rate = decay_rate(model, 0)
        model.nu_fitted = decay_rate(model, 2)
    return model


def flat_model(n: int, grid=None, m: int = 1) -> ACResolutionModel:
    """Degenerate a -> 0 limit: the flat cone as a resolution model."""
    if grid is None:
        grid = _default_grid(n, 1.0)
    else:
        grid = _resolve_grid(grid, n, 1.0)
    profile = RadialPotential.from_fn(flat_fn(), n=n, t=grid, m=m)
    zero = AnalyticPotential(
        u=np.zeros_like, d1=np.zeros_like, d2=np.zeros_like,
        d3=np.zeros_like, d4=np.zeros_like, label="zero",
    )
    return ACResolutionModel(n=n, a=0.0, profile=profile, nu_fitted=None,
                             potential_gap_rate=None, forms=None, gap_fn=zero)


def _gap_derivative(model: ACResolutionModel, j: int, t: np.ndarray) -> np.ndarray:
    g = model.gap_fn
    return (g.u, g.d1, g.d2, g.d3, g.d4)[j](t)


def decay_fit(model: ACResolutionModel, k: int,
              window: tuple[float, float] | None = None) -> PowerLawFit:
    """Power-law fit of the k-th cone derivative of the gap against r.

    The |nabla^k|-proxy is r^{-k} |g^(k)(t)|; for the Calabi model its slope
    is (2-2n) - k.  The fit window is expressed in x = a^{2n} e^{-nt} and
    must span at least two decades of r = e^{t/2}; the gap forms are
    cancellation-free, so the window has no noise-floor constraint and the
    default just targets 2.2 decades ending at x = 1e-2.
    """
    if not 0 <= k <= 4:
        raise ConfigurationError("derivative order must be 0..4")
    if model.is_flat:
        raise ConfigurationError("flat model has no decay scale to fit")
    t = model.profile.t
    x = model.forms._x(t)
    if window is None:
        x_hi = 1e-2
        x_lo = x_hi * math.exp(-2.2 * 2.0 * math.log(10.0) * model.n)
    else:
        x_lo, x_hi = window
    mask = (x >= x_lo) & (x <= x_hi)
    if np.count_nonzero(mask) < 8:
        raise InsufficientDataError("too few grid points in the asymptotic window")
    tm = t[mask]
    decades = (tm.max() - tm.min()) / (2.0 * math.log(10.0))
    if decades < 2.0:
        raise InsufficientDataError(
            f"asymptotic regime spans {decades:.2f} decades of r, need >= 2"
        )
    r = np.exp(tm / 2.0)
    data = np.abs(_gap_derivative(model, k, tm)) * r ** (-float(k))
    return fit_power_law(r, data)


def decay_rate(model: ACResolutionModel, k: int) -> float:
    """Fitted decay exponent of the k-th cone derivative of the gap."""
    return decay_fit(model, k).exponent


def cy_residual(model, route: str = "analytic") -> tuple[float, float]:
    """(sup |Sc|, sup relative det-density deviation) for a model.

    Closed-form models are evaluated in long double, where both residuals
    sit at the extended-precision noise floor; a plain RadialPotential gets
    the discrete route (useful for detecting non-CY perturbations).
    """
    if isinstance(model, ACResolutionModel):
        if model.is_flat:
            profile = model.profile
            t = profile.t.astype(np.longdouble)
            e = np.exp(t)
            derivs = (e, e, e, e)
        else:
            t = model.profile.t.astype(np.longdouble)
            f = model.forms
            derivs = (f.u1(t), f.u2(t), f.u3(t), f.u4(t))
        n = model.n
    elif isinstance(model, RadialPotential):
        t = model.t
        derivs = model.all_derivatives(route="fd" if route == "fd" else "auto")
        n = model.n
    else:
        raise ConfigurationError("expected an ACResolutionModel or RadialPotential")
    u1, u2, u3, u4 = derivs
    sc = sc_from_derivs(n, u1, u2, u3, u4)
    q = np.exp(log_det_from(n, t, u1, u2))
    q_ref = float(np.median(q.astype(float)))
    det_dev = float(np.max(np.abs(q.astype(float) - q_ref)) / q_ref)
    return float(np.max(np.abs(sc.astype(float)))), det_dev


def volume_excess_coefficient(n: int, a: float, m: int = 1) -> float:
    """|d Vol / d lambda^{2n}| of gluing the size-a model: c_link a^{2n} / n.

    The window volume of the Calabi model equals the flat cone's exactly
    (the CY identity makes u'^n - e^{nt} constant), so the whole effect of
    gluing at scale lambda on the total volume is the bottom endpoint term
    (lambda^2 a^2)^n of the closed-form volume formula.
    """
    return link_volume_constant(n, m) * a ** (2 * n) / n
