"""Link spectra and indicial sets.

Dimension oracle: the degree-k spherical harmonics on S^{2n-1} have dimension
C(k+2n-1, 2n-1) - C(k-2+2n-1, 2n-1), computed here straight from that binomial
formula and compared against the bidegree decomposition the package sums.
"""

import math

import numpy as np
import pytest

from cscklab.errors import (ConfigurationError, InsufficientDataError)
from cscklab.radial import AnalyticPotential, RadialPotential, flat_fn, flat_potential
from cscklab.spectrum import (bidegree_dimension, gap_certificate,
                              indicial_residual_test, indicial_roots,
                              quotient_sphere_spectrum)


def _harmonic_dim(real_dim: int, k: int) -> int:
    # classical formula on S^{real_dim - 1}
    if k == 0:
        return 1
    return (math.comb(k + real_dim - 1, real_dim - 1)
            - math.comb(k + real_dim - 3, real_dim - 1))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_bidegree_sums_match_sphere_dimensions(n):
    for k in range(9):
        total = sum(bidegree_dimension(n, p, k - p) for p in range(k + 1))
        assert total == _harmonic_dim(2 * n, k)


def test_known_small_dimensions():
    # H_{1,1}(S^5) is the adjoint representation of SU(3)
    assert bidegree_dimension(3, 1, 1) == 8
    assert bidegree_dimension(3, 1, 0) == 3
    assert bidegree_dimension(2, 1, 1) == 3
    assert bidegree_dimension(3, -1, 2) == 0


def test_full_sphere_spectrum():
    spec = quotient_sphere_spectrum(3, 1, degree_max=6)
    assert [ln.degree for ln in spec.lines] == list(range(7))
    assert np.allclose(spec.eigenvalues(),
                       [k * (k + 4) for k in range(7)])
    assert spec.lines[1].multiplicity == _harmonic_dim(6, 1)


def test_quotient_selection_rule():
    spec = quotient_sphere_spectrum(3, 3, degree_max=6)
    assert [ln.degree for ln in spec.lines] == [0, 2, 3, 4, 5, 6]
    for ln in spec.lines:
        assert all((p - q) % 3 == 0 for p, q, _ in ln.bidegrees)
    k2 = next(ln for ln in spec.lines if ln.degree == 2)
    assert k2.bidegrees == [(1, 1, 8)]


def test_spectrum_validation():
    with pytest.raises(ConfigurationError):
        quotient_sphere_spectrum(1, 2)
    with pytest.raises(ConfigurationError):
        quotient_sphere_spectrum(3, 0)
    with pytest.raises(ConfigurationError):
        quotient_sphere_spectrum(3, 2, degree_max=-1)


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_critical_window_roots_n3(m):
    spec = quotient_sphere_spectrum(3, m)
    ind = indicial_roots(spec, order=4, window=(-4.0, 2.0))
    assert ind.values().tolist() == [-4.0, -2.0, 0.0, 2.0]
    assert ind.max_residual() < 1e-12


def test_indicial_orders_and_collisions():
    spec = quotient_sphere_spectrum(3, 2)
    ind2 = indicial_roots(spec, order=2)
    assert not any(r.shifted for r in ind2.roots)
    ind4 = indicial_roots(spec, order=4)
    assert set(ind2.values()) <= set(ind4.values())
    # 2 = 0 + shift = harmonic root of lam=12; -4 = harmonic of lam=0 = -6 + shift
    cols = ind4.collisions()
    assert -4.0 in cols and 2.0 in cols
    with pytest.raises(ConfigurationError):
        indicial_roots(spec, order=3)


def test_indicial_json_schema():
    spec = quotient_sphere_spectrum(3, 2, degree_max=4)
    payload = indicial_roots(spec, order=4, window=(-4.0, 2.0)).to_json()
    assert payload["n"] == 3 and payload["m"] == 2 and payload["order"] == 4
    assert payload["window"] == [-4.0, 2.0]
    shifts = {r["shift"] for r in payload["roots"]}
    assert shifts == {0, 2}
    for r in payload["roots"]:
        assert set(r) == {"xi", "lambda_k", "shift", "degree", "multiplicity"}


@pytest.mark.parametrize("n,m", [(3, 2), (3, 3), (3, 4),
                                 (4, 2), (4, 3), (5, 2)])
def test_gap_certificate_true_cases(n, m):
    cert = gap_certificate(quotient_sphere_spectrum(n, m))
    assert cert.ok
    assert cert.margin == pytest.approx(1.0)
    assert cert.window == (3.0 - 2.0 * n, 1.0)
    assert cert.allowed == (4.0 - 2.0 * n, 0.0)
    assert cert.blocking == []


def test_gap_certificate_full_sphere_blocked():
    # degree-1 harmonics survive only for m = 1 and put xi = 1 on the boundary
    cert = gap_certificate(quotient_sphere_spectrum(3, 1))
    assert not cert.ok
    assert cert.margin == 0.0
    assert 1.0 in cert.blocking
    with pytest.raises(ConfigurationError):
        gap_certificate(quotient_sphere_spectrum(3, 2, degree_max=3))


def _decaying_term(c: float, kappa: float) -> AnalyticPotential:
    e = lambda t: c * np.exp(kappa * t)
    return AnalyticPotential(u=e,
                             d1=lambda t: kappa * e(t),
                             d2=lambda t: kappa**2 * e(t),
                             d3=lambda t: kappa**3 * e(t),
                             d4=lambda t: kappa**4 * e(t),
                             label=f"{c}exp({kappa}t)")


def test_residual_improvement_toward_infinity():
    # u = e^t + 0.01 e^{-t}: approaches the cone at rate r^{-4} in the metric,
    # giving the degree-2 mode residual an extra r^{-4} of decay
    fn = flat_fn() + _decaying_term(0.01, -1.0)
    t = np.linspace(0.0, 12.0, 1201)
    u = RadialPotential.from_fn(fn, n=3, t=t)
    fit = indicial_residual_test(u, xi=2.0, mode_eigenvalue=12.0,
                                 fit_window=(4.0, 10.0),
                                 orientation="infinity", expected_rate=4.0)
    assert fit.ok
    assert fit.eta == pytest.approx(4.0, abs=0.25)
    assert fit.expected == 2.0  # contract value is capped by eta0


def test_residual_improvement_toward_apex():
    fn = flat_fn() + _decaying_term(0.05, 2.0)
    t = np.linspace(-12.0, 0.0, 1201)
    u = RadialPotential.from_fn(fn, n=3, t=t)
    fit = indicial_residual_test(u, xi=-4.0, mode_eigenvalue=0.0,
                                 fit_window=(-10.0, -4.0),
                                 orientation="apex", expected_rate=2.0)
    assert fit.ok


def test_residual_exact_cone_hits_floor():
    t = np.linspace(0.0, 8.0, 801)
    with pytest.raises(InsufficientDataError):
        indicial_residual_test(flat_potential(3, t), xi=2.0,
                               mode_eigenvalue=12.0, fit_window=(2.0, 6.0))
    with pytest.raises(ConfigurationError):
        indicial_residual_test(flat_potential(3, t), xi=2.0,
                               mode_eigenvalue=12.0, fit_window=(2.0, 6.0),
                               orientation="sideways")
