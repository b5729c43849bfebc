"""Finite-difference stencils on radial grids.

Derivatives are taken in the log-radius variable t. Interior rows use
centered 7-point (or 5-point for first/second derivatives) windows, which on
uniform grids are fourth-order accurate; boundary rows fall back to one-sided
second-order stencils. Weights come from Fornberg's recurrence, so nothing
here assumes uniform spacing.

Stencils are stored in a padded row format (index matrix + weight matrix)
instead of scipy sparse so they can be applied in float64 and in long double
with the same code path. The long-double path matters: the final residual
polish of the solver runs in extended precision.

A NodeSet augments a plain grid with per-node chart tags for the two
degenerate ends of a resolved cone: near an exceptional set the natural
smooth coordinate is s = e^{n(t - 2 log lam)} and near a projective cap it is
x = e^{-t}. Rows tagged with a chart compute their t-derivative weights by
differentiating in the chart coordinate and composing with the chain rule
(Stirling-number expansion of (c d/dc)^k), which keeps the weights well
scaled where t-only stencils would drown in rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "fd_weights",
    "Stencils",
    "derivative_stencils",
    "NodeSet",
]

# max derivative order supported anywhere in the package
MAX_ORDER = 4

# interior window sizes per derivative order (uniform grids: order 4)
_INTERIOR_WIDTH = {1: 5, 2: 5, 3: 7, 4: 7}

# Stirling numbers of the second kind {k j}: (c d/dc)^k = sum_j S(k,j) c^j d^j/dc^j
_STIRLING = {
    1: {1: 1.0},
    2: {1: 1.0, 2: 1.0},
    3: {1: 1.0, 2: 3.0, 3: 1.0},
    4: {1: 1.0, 2: 7.0, 3: 6.0, 4: 1.0},
}


def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Weights of the m-th derivative at z from samples at nodes x.

    Fornberg (1988) recurrence; exact for polynomials of degree len(x)-1.

    Parameters
    ----------
    z : evaluation point.
    x : strictly monotone node positions, len(x) >= m+1.
    m : derivative order, m >= 0.
    """
    x = np.asarray(x, dtype=float)
    nn = len(x)
    if nn < m + 1:
        raise ConfigurationError(f"need at least {m + 1} nodes for derivative order {m}")
    c = np.zeros((nn, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, nn):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@dataclass
class Stencils:
    """Padded-row sparse operator: row i maps f to sum_k w[i,k]*f[idx[i,k]]."""

    idx: np.ndarray  # (N, K) int
    w: np.ndarray    # (N, K) float64

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Apply to a vector; output dtype follows f (long double supported)."""
        w = self.w.astype(f.dtype, copy=False)
        return (w * f[self.idx]).sum(axis=1)

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        n = self.idx.shape[0]
        a = np.zeros((n, n), dtype=dtype)
        rows = np.repeat(np.arange(n), self.idx.shape[1])
        np.add.at(a, (rows, self.idx.ravel()), self.w.ravel().astype(dtype))
        return a

    def scale_rows(self, d: np.ndarray) -> "Stencils":
        return Stencils(self.idx, self.w * np.asarray(d)[:, None])


def _window(i: int, n: int, width: int) -> tuple[int, int]:
    # clip a centered window of `width` nodes at the two ends
    lo = i - (width - 1) // 2
    lo = max(0, min(lo, n - width))
    return lo, lo + width


def derivative_stencils(t: np.ndarray, m: int, boundary_width: int | None = None) -> Stencils:
    """d^m/dt^m on arbitrary strictly increasing nodes t.

    Interior rows: centered windows (5 nodes for m<=2, 7 for m in {3,4}),
    fourth order on uniform grids. The first and last rows that cannot center
    use one-sided windows of m+2 nodes (second order on uniform grids) unless
    boundary_width overrides the size.
    """
    t = np.asarray(t, dtype=float)
    n = len(t)
    if m < 1 or m > MAX_ORDER:
        raise ConfigurationError(f"derivative order {m} unsupported")
    width = _INTERIOR_WIDTH[m]
    if n < width:
        raise ConfigurationError(f"grid of {n} nodes too short for order-{m} stencils")
    bw = boundary_width or (m + 2)
    half = (width - 1) // 2
    kmax = max(width, bw)
    idx = np.zeros((n, kmax), dtype=np.int64)
    w = np.zeros((n, kmax))
    for i in range(n):
        use = bw if (i < half or i >= n - half) else width
        lo, hi = _window(i, n, use)
        idx[i, :use] = np.arange(lo, hi)
        w[i, :use] = fd_weights(t[i], t[lo:hi], m)
    return Stencils(idx, w)


CHART_T, CHART_S, CHART_X = 0, 1, 2


@dataclass
class NodeSet:
    """Grid nodes with optional regular-coordinate charts at the ends.

    t : node positions in log-radius, strictly increasing.
    tag : per-node chart id (CHART_T / CHART_S / CHART_X).
    coord : chart coordinate value per node (s, x, or t itself).
    n : complex dimension (enters the s-chart chain rule).
    shift : the s-chart is s = e^{n (t - shift)} (shift = 2 log lam for a
        glued metric, 0 for a bare resolution model).
    """

    t: np.ndarray
    tag: np.ndarray
    coord: np.ndarray
    n: int
    shift: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ConfigurationError("node positions must be strictly increasing")

    @classmethod
    def uniform(cls, t: np.ndarray, n: int) -> "NodeSet":
        t = np.asarray(t, dtype=float)
        return cls(t=t, tag=np.full(len(t), CHART_T, dtype=np.int8), coord=t.copy(), n=n)

    def __len__(self) -> int:
        return len(self.t)

    def _chart_positions(self, lo: int, hi: int, tag: int) -> np.ndarray:
        tt = self.t[lo:hi]
        if tag == CHART_T:
            return tt
        if tag == CHART_S:
            return np.exp(self.n * (tt - self.shift))
        return np.exp(-tt)  # CHART_X

    def derivative_stencils(self, m: int) -> Stencils:
        """t-derivative stencils; chart rows differentiate in their chart."""
        if m in self._cache:
            return self._cache[m]
        t = self.t
        n = len(t)
        width = _INTERIOR_WIDTH[m]
        bw = m + 2
        half = (width - 1) // 2
        kmax = max(width, bw, _INTERIOR_WIDTH[MAX_ORDER])
        idx = np.zeros((n, kmax), dtype=np.int64)
        w = np.zeros((n, kmax))
        for i in range(n):
            use = bw if (i < half or i >= n - half) else width
            lo, hi = _window(i, n, use)
            idx[i, :use] = np.arange(lo, hi)
            tag = int(self.tag[i])
            if tag == CHART_T:
                w[i, :use] = fd_weights(t[i], t[lo:hi], m)
                continue
            pos = self._chart_positions(lo, hi, tag)
            c0 = self.coord[i]
            # (d/dt)^m via (c d/dc): s-chart d/dt = n_c * A, x-chart d/dt = -A
            scale = float(self.n) if tag == CHART_S else -1.0
            row = np.zeros(use)
            for j in range(1, m + 1):
                wj = fd_weights(c0, pos, j)
                row += _STIRLING[m][j] * c0**j * wj
            w[i, :use] = scale**m * row
        st = Stencils(idx, w)
        self._cache[m] = st
        return st

    def all_stencils(self) -> list[Stencils]:
        return [self.derivative_stencils(m) for m in range(1, MAX_ORDER + 1)]
