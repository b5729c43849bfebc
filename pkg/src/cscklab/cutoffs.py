"""Polynomial transition profiles with controlled endpoint flatness.

S_m is the unique polynomial of degree 2m+1 with S_m(0) = 0, S_m(1) = 1 and
derivatives 1..m vanishing at both ends; continued constantly outside [0,1]
it is globally C^m and monotone.  Junction smoothness is what matters here:
a fourth-order operator applied across a transition needs bounded fourth
derivatives, so the default order used by the gluing code is m = 5 (degree
11, C^5 overall, scalar curvature of a glued potential stays C^1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import Polynomial

__all__ = ["Smoothstep", "Ramp", "smoothstep"]


def _step_polynomial(m: int) -> Polynomial:
    # S_m(x) = x^{m+1} sum_{k=0..m} C(m+k,k) C(2m+1,m-k) (-x)^k
    coeffs = np.zeros(2 * m + 2)
    for k in range(m + 1):
        coeffs[m + 1 + k] = comb(m + k, k) * comb(2 * m + 1, m - k) * (-1) ** k
    return Polynomial(coeffs)


@dataclass(frozen=True)
class Smoothstep:
    """C^m ramp: 0 on (-inf, 0], 1 on [1, inf), polynomial between."""

    m: int
    _derivs: tuple

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, order: int = 1):
        """order-th derivative of the continued profile (0 outside [0,1])."""
        if order < 0:
            raise ValueError("derivative order must be >= 0")
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        if order == 0:
            out = np.where(x >= 1.0, 1.0, 0.0)
        else:
            out = np.zeros_like(x)
        inside = (x > 0.0) & (x < 1.0)
        if order <= 2 * self.m + 1 and np.any(inside):
            out[inside] = self._derivs[order](x[inside])
        return float(out[0]) if scalar else out

    def antiderivative(self, x):
        """Integral from 0; equals x - 1/2 for x >= 1 by symmetry."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        prim = self._derivs[0].integ()
        out = np.where(x >= 1.0, x - 0.5, 0.0)
        inside = (x > 0.0) & (x < 1.0)
        out[inside] = prim(x[inside])
        return float(out[0]) if scalar else out

    def on(self, x0: float, x1: float) -> "Ramp":
        return Ramp(self, float(x0), float(x1))


@dataclass(frozen=True)
class Ramp:
    """Smoothstep reparametrized to rise over [x0, x1]."""

    step: Smoothstep
    x0: float
    x1: float

    def __post_init__(self):
        if not self.x1 > self.x0:
            raise ValueError("ramp needs x1 > x0")

    @property
    def scale(self) -> float:
        return 1.0 / (self.x1 - self.x0)

    def __call__(self, x):
        return self.step((np.asarray(x, dtype=float) - self.x0) * self.scale)

    def derivative(self, x, order: int = 1):
        s = self.scale
        arg = (np.asarray(x, dtype=float) - self.x0) * s
        return self.step.derivative(arg, order) * s**order


@lru_cache(maxsize=None)
def smoothstep(m: int) -> Smoothstep:
    """The order-m profile; m = 2 is the classical 6x^5-15x^4+10x^3."""
    if m < 1:
        raise ValueError("flatness order must be >= 1")
    poly = _step_polynomial(m)
    derivs = [poly]
    for _ in range(2 * m + 1):
        derivs.append(derivs[-1].deriv())
    return Smoothstep(m, tuple(derivs))
