r"""Radial Kahler calculus in the log-radius variable.

A rotation-invariant Kahler metric on (a quotient of) the punctured cone is
encoded by a potential profile u(t), t = log rho with rho the squared cone
radius, through omega = i ddbar u. Its Hessian has eigenvalue u'(t) e^{-t}
with multiplicity n-1 (tangent to the link) and u''(t) e^{-t} in the radial
direction, so positivity of the metric is exactly u' > 0 and u'' > 0, and

    log det = (n-1) log u' + log u'' - n t.

Scalar curvature is reported in the complex-trace normalization

    Sc(u) = P''/u'' + (n-1) P'/u',      P := -log det,

so the flat cone gives exactly 0 and the Fubini-Study potential
u = log(1+e^t) gives exactly n(n+1). The Riemannian scalar curvature is
twice this number.

The Laplacian here is the Riemannian Laplace-Beltrami operator

    Lap h = 2 [ h''/u'' + (n-1) h'/u' ] - lam_k h / (2 u'),

acting on a function h(t) times a link eigenfunction with eigenvalue lam_k.
Unit convention: on the flat cone, Lap e^t = 2n (e^t is the squared cone
radius; the squared Riemannian distance is 2 e^t and maps to 4n).
Homogeneous solutions h = e^{xi t / 2} of Lap = 0 satisfy
xi (xi + 2n - 2) = lam_k exactly, which is what the indicial machinery in
`spectrum` consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, PositivityError
from .fd import derivative_stencils

__all__ = [
    "AnalyticPotential",
    "RadialPotential",
    "MetricProfile",
    "metric_from_potential",
    "scalar_curvature",
    "laplacian",
    "scale_pullback",
    "volume",
    "link_volume_constant",
    "flat_potential",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class AnalyticPotential:
    """Closed-form potential: value and first four t-derivatives as callables.

    Keeping models in this form lets gluing and solving resample on any node
    set without interpolation error, and lets the residual polish re-evaluate
    everything in long double (all callables must accept arbitrary float
    dtypes and preserve them).
    """

    u: ArrayFn
    d1: ArrayFn
    d2: ArrayFn
    d3: ArrayFn
    d4: ArrayFn
    label: str = ""

    def derivs(self, t: np.ndarray) -> tuple[np.ndarray, ...]:
        return self.u(t), self.d1(t), self.d2(t), self.d3(t), self.d4(t)

    def ladder(self, t: np.ndarray) -> tuple[np.ndarray, ...]:
        """The four derivatives only (the scalar-curvature inputs)."""
        return self.d1(t), self.d2(t), self.d3(t), self.d4(t)

    def scaled(self, c: float, label: str | None = None) -> "AnalyticPotential":
        f = self
        return AnalyticPotential(
            u=lambda t: c * f.u(t),
            d1=lambda t: c * f.d1(t),
            d2=lambda t: c * f.d2(t),
            d3=lambda t: c * f.d3(t),
            d4=lambda t: c * f.d4(t),
            label=label if label is not None else f"{c}*({f.label})",
        )

    def shifted(self, dt: float, label: str | None = None) -> "AnalyticPotential":
        """t -> u(t - dt)."""
        f = self
        return AnalyticPotential(
            u=lambda t: f.u(t - dt),
            d1=lambda t: f.d1(t - dt),
            d2=lambda t: f.d2(t - dt),
            d3=lambda t: f.d3(t - dt),
            d4=lambda t: f.d4(t - dt),
            label=label if label is not None else f"({f.label})<<{dt}",
        )

    def __add__(self, other: "AnalyticPotential") -> "AnalyticPotential":
        f, g = self, other
        return AnalyticPotential(
            u=lambda t: f.u(t) + g.u(t),
            d1=lambda t: f.d1(t) + g.d1(t),
            d2=lambda t: f.d2(t) + g.d2(t),
            d3=lambda t: f.d3(t) + g.d3(t),
            d4=lambda t: f.d4(t) + g.d4(t),
            label=f"{f.label}+{g.label}",
        )


def flat_fn() -> AnalyticPotential:
    """u = e^t: the flat cone potential (all derivatives equal e^t)."""
    e = np.exp
    return AnalyticPotential(u=e, d1=e, d2=e, d3=e, d4=e, label="flat")


@dataclass
class RadialPotential:
    """Sampled potential profile.

    n : complex dimension (n >= 2).
    t : sample grid in t = log rho, strictly increasing.
    u : potential values on t.
    m : order of the cyclic link quotient S^{2n-1}/Z_m (enters volume).
    derivs : optional analytic derivative samples (d1..d4). When absent,
        derivatives come from FD stencils on t (fourth order on uniform
        interiors).
    fn : optional closed form that produced the samples.
    """

    n: int
    t: np.ndarray
    u: np.ndarray
    m: int = 1
    derivs: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None
    fn: AnalyticPotential | None = None
    label: str = ""
    _fd_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.n < 2:
            raise ConfigurationError("complex dimension n must be >= 2")
        if self.m < 1:
            raise ConfigurationError("quotient order m must be >= 1")
        if self.t.shape != self.u.shape:
            raise ConfigurationError("grid and value arrays differ in length")
        if np.any(np.diff(self.t) <= 0):
            raise ConfigurationError("t grid must be strictly increasing")

    @classmethod
    def from_fn(cls, fn: AnalyticPotential, n: int, t: np.ndarray, m: int = 1,
                label: str | None = None) -> "RadialPotential":
        t = np.asarray(t, dtype=float)
        u, d1, d2, d3, d4 = fn.derivs(t)
        return cls(n=n, t=t, u=u, m=m, derivs=(d1, d2, d3, d4), fn=fn,
                   label=label if label is not None else fn.label)

    @property
    def has_analytic(self) -> bool:
        return self.derivs is not None

    def derivative(self, k: int, route: str = "auto") -> np.ndarray:
        """k-th t-derivative samples, k in 1..4.

        route: 'auto' prefers stored analytic derivatives, 'fd' forces the
        finite-difference route, 'analytic' requires stored derivatives.
        """
        if not 1 <= k <= 4:
            raise ConfigurationError("derivative order must be 1..4")
        if route not in ("auto", "fd", "analytic"):
            raise ConfigurationError(f"unknown derivative route {route!r}")
        if route == "analytic" and self.derivs is None:
            raise ConfigurationError("no analytic derivatives stored")
        if route != "fd" and self.derivs is not None:
            return self.derivs[k - 1]
        if k not in self._fd_cache:
            self._fd_cache[k] = derivative_stencils(self.t, k).apply(self.u)
        return self._fd_cache[k]

    def all_derivatives(self, route: str = "auto") -> tuple[np.ndarray, ...]:
        return tuple(self.derivative(k, route) for k in range(1, 5))

    def spacing(self) -> float:
        """Grid step; raises if the grid is not uniform to 1e-12 relative."""
        d = np.diff(self.t)
        h = float(d[0])
        if np.max(np.abs(d - h)) > 1e-12 * max(1.0, abs(h)):
            raise ConfigurationError("operation requires a uniform t grid")
        return h


@dataclass
class MetricProfile:
    """Pointwise metric data derived from a potential."""

    n: int
    t: np.ndarray
    eig_tangent: np.ndarray   # u' e^{-t}, multiplicity n-1
    eig_radial: np.ndarray    # u'' e^{-t}
    log_det: np.ndarray       # (n-1) log u' + log u'' - n t
    positivity_margin: float  # min over the grid of min(u', u'')


def log_det_from(n: int, t: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    return (n - 1) * np.log(u1) + np.log(u2) - n * t


def metric_from_potential(u: RadialPotential, route: str = "auto") -> MetricProfile:
    u1 = u.derivative(1, route)
    u2 = u.derivative(2, route)
    margin = float(min(u1.min(), u2.min()))
    if margin <= 0.0:
        bad = np.flatnonzero(np.minimum(u1, u2) <= 0.0)
        raise PositivityError(
            "potential is not strictly plurisubharmonic on the grid",
            diagnostics={
                "t_first_bad": float(u.t[bad[0]]),
                "min_u1": float(u1.min()),
                "min_u2": float(u2.min()),
            },
        )
    et = np.exp(-u.t)
    return MetricProfile(
        n=u.n,
        t=u.t,
        eig_tangent=u1 * et,
        eig_radial=u2 * et,
        log_det=log_det_from(u.n, u.t, u1, u2),
        positivity_margin=margin,
    )


def ricci_coeffs(n: int, u1, u2, u3, u4):
    """First and second t-derivatives of P = -log det.

    Written in ratio form so the expressions stay finite wherever u', u'' > 0
    and stay exact for any float dtype.
    """
    r21 = u2 / u1
    r32 = u3 / u2
    p1 = -((n - 1) * r21 + r32 - n)
    p2 = -((n - 1) * (u3 / u1 - r21 * r21) + u4 / u2 - r32 * r32)
    return p1, p2


def sc_from_derivs(n: int, u1, u2, u3, u4):
    """Scalar curvature (complex-trace normalization) from derivative arrays."""
    p1, p2 = ricci_coeffs(n, u1, u2, u3, u4)
    return p2 / u2 + (n - 1) * p1 / u1


def sc_jacobian_coeffs(n: int, u1, u2, u3, u4):
    """Coefficients (c1..c4) with  dSc[phi] = sum_k c_k phi^{(k)}.

    Exact derivative of sc_from_derivs with respect to (u1..u4); the discrete
    linearized operator is sum_k diag(c_k) D_k, which makes the linearization
    match the finite-difference directional derivative of the scalar
    curvature map to rounding.
    """
    inv1, inv2 = 1.0 / u1, 1.0 / u2
    p1, p2 = ricci_coeffs(n, u1, u2, u3, u4)
    # dP1 = a1 du1 + a2 du2 + a3 du3
    a1 = (n - 1) * u2 * inv1**2
    a2 = -(n - 1) * inv1 + u3 * inv2**2
    a3 = -inv2
    # dP2 = b1 du1 + b2 du2 + b3 du3 + b4 du4
    b1 = (n - 1) * (u3 * inv1**2 - 2.0 * u2**2 * inv1**3)
    b2 = 2.0 * (n - 1) * u2 * inv1**2 + u4 * inv2**2 - 2.0 * u3**2 * inv2**3
    b3 = -(n - 1) * inv1 + 2.0 * u3 * inv2**2
    b4 = -inv2
    c1 = inv2 * b1 + (n - 1) * (inv1 * a1 - p1 * inv1**2)
    c2 = inv2 * b2 - p2 * inv2**2 + (n - 1) * inv1 * a2
    c3 = inv2 * b3 + (n - 1) * inv1 * a3
    c4 = inv2 * b4
    return c1, c2, c3, c4


def scalar_curvature(u: RadialPotential, route: str = "auto") -> np.ndarray:
    """Scalar curvature profile of omega = i ddbar u (complex trace)."""
    u1, u2, u3, u4 = u.all_derivatives(route)
    if min(u1.min(), u2.min()) <= 0.0:
        raise PositivityError(
            "scalar curvature needs a positive metric",
            diagnostics={"min_u1": float(u1.min()), "min_u2": float(u2.min())},
        )
    return sc_from_derivs(u.n, u1, u2, u3, u4)


def laplacian(u: RadialPotential, h: np.ndarray, mode_eigenvalue: float = 0.0,
              h_derivs: tuple[np.ndarray, np.ndarray] | None = None,
              route: str = "auto") -> np.ndarray:
    """Laplace-Beltrami operator on h(t) * (link eigenfunction).

    mode_eigenvalue is the link eigenvalue lam_k (0 for invariant functions).
    h_derivs optionally supplies analytic (h', h''); otherwise both come from
    FD stencils on u.t.
    """
    h = np.asarray(h)
    u1 = u.derivative(1, route)
    u2 = u.derivative(2, route)
    if h_derivs is not None:
        h1, h2 = h_derivs
    else:
        h1 = derivative_stencils(u.t, 1).apply(h)
        h2 = derivative_stencils(u.t, 2).apply(h)
    out = 2.0 * (h2 / u2 + (u.n - 1) * h1 / u1)
    if mode_eigenvalue != 0.0:
        out = out - mode_eigenvalue * h / (2.0 * u1)
    return out


def scale_pullback(u: RadialPotential, lam: float) -> RadialPotential:
    """Pull back by the cone dilation and rescale: v = lam^2 sigma_lam^* u.

    In profile terms v(t) = lam^2 u(t - 2 log lam): the sample values and
    derivatives are multiplied by lam^2 and the grid shifts by +2 log lam.
    Scalar curvature transforms as Sc_v(t) = lam^{-2} Sc_u(t - 2 log lam).
    """
    if lam <= 0:
        raise ConfigurationError("scaling parameter lam must be positive")
    c = lam * lam
    shift = 2.0 * math.log(lam)
    derivs = None
    if u.derivs is not None:
        derivs = tuple(c * d for d in u.derivs)
    fn = None
    if u.fn is not None:
        base = u.fn
        fn = AnalyticPotential(
            u=lambda t: c * base.u(t - shift),
            d1=lambda t: c * base.d1(t - shift),
            d2=lambda t: c * base.d2(t - shift),
            d3=lambda t: c * base.d3(t - shift),
            d4=lambda t: c * base.d4(t - shift),
            label=f"scale({base.label},{lam})",
        )
    return RadialPotential(
        n=u.n, t=u.t + shift, u=c * u.u, m=u.m, derivs=derivs, fn=fn,
        label=f"scale({u.label},{lam})",
    )


def link_volume_constant(n: int, m: int) -> float:
    """Vol(S^{2n-1}/Z_m) = 2 pi^n / ((n-1)! m)."""
    return 2.0 * math.pi**n / (math.factorial(n - 1) * m)


def volume(u: RadialPotential, t_window: tuple[float, float] | None = None) -> float:
    """Volume of the shell between two grid radii.

    Closed form: the volume density is c_link u'^{n-1} u'' dt, whose
    antiderivative is c_link u'^n / n, so only endpoint values of u' enter.
    Window endpoints snap to the nearest grid points.
    """
    u1 = u.derivative(1)
    if t_window is None:
        i0, i1 = 0, len(u.t) - 1
    else:
        t0, t1 = t_window
        if t1 <= t0:
            raise ConfigurationError("volume window must be increasing")
        i0 = int(np.argmin(np.abs(u.t - t0)))
        i1 = int(np.argmin(np.abs(u.t - t1)))
        if i1 <= i0:
            raise ConfigurationError("volume window collapses on this grid")
    c = link_volume_constant(u.n, u.m)
    return float(c * (u1[i1] ** u.n - u1[i0] ** u.n) / u.n)


def flat_potential(n: int, t: np.ndarray, m: int = 1) -> RadialPotential:
    return RadialPotential.from_fn(flat_fn(), n=n, t=t, m=m, label="flat")
