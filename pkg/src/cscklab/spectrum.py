r"""Link eigenvalues and indicial roots for quotient cones.

The links are lens-type quotients S^{2n-1}/Z_m with the diagonal action
z -> zeta z. Sphere harmonics split into bidegree pieces H_{p,q} with
Laplace eigenvalue (p+q)(p+q+2n-2); the Z_m character on H_{p,q} is
zeta^{p-q}, so exactly the p = q (mod m) pieces descend to the quotient.

A homogeneous mode h = r^xi * Y_k on the exact cone is harmonic iff
xi (xi + 2n - 2) = lam_k (see `radial.laplacian`), which gives the degree-2
indicial roots; the bilaplacian adds the +2 shift of every root. The gap
certificate measures how far the indicial set stays from the critical
interval (3-2n, 1) apart from the two unavoidable roots 4-2n and 0; the
margin must be positive for the weighted Fredholm theory downstream to have
any admissible weight at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, NumericalError
from .fitting import fit_power_law
from .radial import RadialPotential, laplacian

__all__ = [
    "LinkSpectrum",
    "quotient_sphere_spectrum",
    "IndicialSet",
    "indicial_roots",
    "GapCertificate",
    "gap_certificate",
    "IndicialFit",
    "indicial_residual_test",
]


def bidegree_dimension(n: int, p: int, q: int) -> int:
    """dim H_{p,q}(S^{2n-1}): harmonic (p,q)-polynomials in C^n."""
    if p < 0 or q < 0:
        return 0
    full = math.comb(p + n - 1, n - 1) * math.comb(q + n - 1, n - 1)
    if p >= 1 and q >= 1:
        full -= math.comb(p + n - 2, n - 1) * math.comb(q + n - 2, n - 1)
    return full


@dataclass
class SpectralLine:
    eigenvalue: float
    degree: int                       # p + q
    multiplicity: int                 # summed over contributing (p, q)
    bidegrees: list[tuple[int, int, int]]  # (p, q, dim) with dim > 0


@dataclass
class LinkSpectrum:
    n: int
    m: int
    degree_max: int
    lines: list[SpectralLine]

    def eigenvalues(self) -> np.ndarray:
        return np.array([ln.eigenvalue for ln in self.lines])


def quotient_sphere_spectrum(n: int, m: int, degree_max: int = 24) -> LinkSpectrum:
    """Invariant Laplace spectrum of S^{2n-1}/Z_m up to total degree degree_max."""
    if n < 2:
        raise ConfigurationError("need complex dimension n >= 2")
    if m < 1:
        raise ConfigurationError("quotient order m must be >= 1")
    if degree_max < 0:
        raise ConfigurationError("degree_max must be non-negative")
    lines: list[SpectralLine] = []
    for k in range(degree_max + 1):
        bids = []
        total = 0
        for p in range(k + 1):
            q = k - p
            if (p - q) % m != 0:
                continue
            d = bidegree_dimension(n, p, q)
            if d > 0:
                bids.append((p, q, d))
                total += d
        if total > 0:
            lam = float(k * (k + 2 * n - 2))
            lines.append(SpectralLine(eigenvalue=lam, degree=k,
                                      multiplicity=total, bidegrees=bids))
    return LinkSpectrum(n=n, m=m, degree_max=degree_max, lines=lines)


@dataclass
class IndicialRoot:
    xi: float
    eigenvalue: float
    degree: int
    shifted: bool        # True when the root is xi0 + 2 from the bilaplacian
    multiplicity: int
    residual: float      # |xi0 (xi0 + 2n - 2) - lam| with xi0 the degree-2 root

    @property
    def origin(self) -> str:
        return "shifted" if self.shifted else "harmonic"


@dataclass
class IndicialSet:
    n: int
    m: int
    order: int           # 2: Laplacian, 4: bilaplacian
    window: tuple[float, float] | None
    roots: list[IndicialRoot]

    def values(self) -> np.ndarray:
        return np.unique(np.array([r.xi for r in self.roots]))

    def collisions(self) -> list[float]:
        """Roots produced both directly and by the +2 shift (multiplicity pileup)."""
        seen: dict[float, set[bool]] = {}
        for r in self.roots:
            seen.setdefault(r.xi, set()).add(r.shifted)
        return sorted(x for x, src in seen.items() if len(src) == 2)

    def max_residual(self) -> float:
        return max((r.residual for r in self.roots), default=0.0)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "order": self.order,
            "window": list(self.window) if self.window is not None else None,
            "roots": [
                {"xi": r.xi, "lambda_k": r.eigenvalue,
                 "shift": 2 if r.shifted else 0,
                 "degree": r.degree, "multiplicity": r.multiplicity}
                for r in self.roots
            ],
        }


def _degree2_roots(n: int, lam: float) -> tuple[float, float]:
    # xi(xi + 2n - 2) = lam; discriminant is a perfect square for integer spectra
    b = 2.0 * n - 2.0
    disc = math.sqrt(b * b + 4.0 * lam)
    return (-b + disc) / 2.0, (-b - disc) / 2.0


def indicial_roots(spectrum: LinkSpectrum, order: int = 4,
                   window: tuple[float, float] | None = None) -> IndicialSet:
    """Indicial roots of the (bi)Laplacian on the cone over the quotient link.

    window, when given, keeps roots with window[0] <= xi <= window[1]
    (closed on both sides).
    """
    if order not in (2, 4):
        raise ConfigurationError("order must be 2 or 4")
    n = spectrum.n
    roots: list[IndicialRoot] = []
    for ln in spectrum.lines:
        for xi0 in _degree2_roots(n, ln.eigenvalue):
            res = abs(xi0 * (xi0 + 2 * n - 2) - ln.eigenvalue)
            cand = [(xi0, False)]
            if order == 4:
                cand.append((xi0 + 2.0, True))
            for xi, shifted in cand:
                if window is not None and not (window[0] <= xi <= window[1]):
                    continue
                roots.append(IndicialRoot(xi=xi, eigenvalue=ln.eigenvalue,
                                          degree=ln.degree, shifted=shifted,
                                          multiplicity=ln.multiplicity, residual=res))
    roots.sort(key=lambda r: (r.xi, r.shifted))
    return IndicialSet(n=n, m=spectrum.m, order=order, window=window, roots=roots)


@dataclass
class GapCertificate:
    n: int
    m: int
    ok: bool
    margin: float                  # largest eps with Ind cap (3-2n-eps, 1+eps) = allowed
    window: tuple[float, float]    # (3-2n, 1)
    allowed: tuple[float, float]   # (4-2n, 0)
    blocking: list[float]          # roots forcing margin to zero


def gap_certificate(spectrum: LinkSpectrum) -> GapCertificate:
    """Certify that only the unavoidable indicial roots meet (3-2n, 1).

    The two allowed roots are 0 (constants) and 4-2n (the shifted dual root).
    The margin is the largest eps such that the enlarged open interval
    (3-2n-eps, 1+eps) still meets the order-4 indicial set in exactly those
    two roots; a non-allowed root on or inside the closed critical interval
    forces margin 0 and ok False.

    Roots of degree above the truncation cap sit at xi >= degree on the
    right and below 2-2n-degree on the left, while the ever-present root 2
    already caps the margin at 1, so any cap >= 4 decides the certificate
    exactly.
    """
    if spectrum.degree_max < 4:
        raise ConfigurationError("spectrum truncated below degree 4 cannot certify")
    n = spectrum.n
    lo, hi = 3.0 - 2.0 * n, 1.0
    allowed = (4.0 - 2.0 * n, 0.0)
    xs = indicial_roots(spectrum, order=4).values()
    for a in allowed:
        if not np.any(np.abs(xs - a) < 1e-9):
            raise NumericalError(f"expected indicial root {a} missing from spectrum")
    margin = math.inf
    blocking: list[float] = []
    for x in xs:
        if any(abs(x - a) < 1e-9 for a in allowed):
            continue
        eps_x = max(lo - x, x - hi)   # largest eps keeping x outside
        if eps_x <= 1e-12:
            blocking.append(float(x))
        else:
            margin = min(margin, eps_x)
    ok = not blocking
    return GapCertificate(n=n, m=spectrum.m, ok=ok,
                          margin=float(margin) if ok else 0.0,
                          window=(lo, hi), allowed=allowed, blocking=sorted(blocking))


@dataclass
class IndicialFit:
    slope: float          # fitted d log|R| / d log r
    eta: float            # measured improvement over the bare r^{xi-2} scaling
    expected: float       # min(expected_rate, eta0) contract value
    ok: bool
    npoints: int
    window: tuple[float, float]


def indicial_residual_test(u: RadialPotential, xi: float, mode_eigenvalue: float,
                           fit_window: tuple[float, float],
                           orientation: str = "infinity",
                           expected_rate: float | None = None,
                           eta0: float = 2.0, tol: float = 0.25) -> IndicialFit:
    """Check that an exact-cone mode solves the model Laplacian to higher order.

    Applies the metric Laplacian of `u` to h = r^xi = e^{xi t / 2} (times a
    link mode with eigenvalue mode_eigenvalue) and fits the residual decay in
    log r over fit_window (a t-interval). On the exact cone the residual
    vanishes; on a model that approaches the cone at rate `expected_rate`
    (toward r -> infinity for 'infinity' orientation, r -> 0 for 'apex') the
    residual improves on r^{xi-2} by eta >= min(expected_rate, eta0) - tol.
    """
    if orientation not in ("infinity", "apex"):
        raise ConfigurationError("orientation must be 'infinity' or 'apex'")
    t = u.t
    h = np.exp(0.5 * xi * t)
    h1 = 0.5 * xi * h
    h2 = 0.25 * xi * xi * h
    resid = laplacian(u, h, mode_eigenvalue=mode_eigenvalue, h_derivs=(h1, h2))
    mask = (t >= fit_window[0]) & (t <= fit_window[1])
    r = np.exp(0.5 * t[mask])
    y = np.abs(resid[mask])
    # drop points at the rounding floor of the mode amplitude
    floor = 1e-13 * np.max(np.abs(h[mask])) * max(1.0, abs(xi) ** 2)
    keep = y > floor
    if keep.sum() < 8:
        raise InsufficientDataError(
            f"only {int(keep.sum())} usable residual samples in the fit window")
    fit = fit_power_law(r[keep], y[keep])
    slope = fit.exponent
    eta = (xi - 2.0) - slope if orientation == "infinity" else slope - (xi - 2.0)
    expected = eta0 if expected_rate is None else min(expected_rate, eta0)
    return IndicialFit(slope=float(slope), eta=float(eta), expected=float(expected),
                       ok=bool(eta >= expected - tol), npoints=int(keep.sum()),
                       window=fit_window)
