"""Stencil layer: Fornberg weights, convergence orders, chart chain rules."""

import math

import numpy as np
import pytest

from cscklab.errors import ConfigurationError
from cscklab.fd import (CHART_S, CHART_T, CHART_X, NodeSet, Stencils,
                        derivative_stencils, fd_weights)


def test_fd_weights_polynomial_exactness(rng):
    # weights are exact on polynomials up to degree len(x)-1
    x = np.sort(rng.uniform(-1.0, 1.0, 7))
    z = 0.1
    for m in range(0, 4):
        w = fd_weights(z, x, m)
        for p in range(len(x)):
            got = float(w @ x**p)
            want = 0.0
            if p >= m:
                want = math.factorial(p) / math.factorial(p - m) * z ** (p - m)
            assert got == pytest.approx(want, abs=1e-9)


def test_fd_weights_classical_centered_values():
    # uniform five-point first/second derivative rows, h = 1
    x = np.arange(-2.0, 3.0)
    w1 = fd_weights(0.0, x, 1)
    assert np.allclose(w1, [1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12], atol=1e-13)
    w2 = fd_weights(0.0, x, 2)
    assert np.allclose(w2, [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12], atol=1e-13)


def test_fd_weights_short_node_list_rejected():
    with pytest.raises(ConfigurationError):
        fd_weights(0.0, np.array([0.0, 1.0]), 2)


@pytest.mark.parametrize("m,hs", [(1, (0.04, 0.02)), (2, (0.04, 0.02)),
                                  (3, (0.08, 0.04)), (4, (0.08, 0.04))])
def test_interior_convergence_is_fourth_order(m, hs):
    # sup interior error on sin falls ~h^4 per halving; the coarser pairs for
    # m in {3, 4} keep the truncation term above the h^-4 roundoff floor
    errs = []
    for h in hs:
        t = np.arange(-3.0, 3.0 + h / 2, h)
        st = derivative_stencils(t, m)
        exact = np.sin(t + m * np.pi / 2.0)
        err = np.abs(st.apply(np.sin(t)) - exact)
        errs.append(float(err[8:-8].max()))
    assert errs[0] / errs[1] > 12.0


def test_boundary_rows_are_second_order():
    # exp has no vanishing derivatives, so the leading error term is visible
    errs = []
    for h in (0.02, 0.01):
        t = np.arange(0.0, 2.0 + h / 2, h)
        st = derivative_stencils(t, 2)
        err = np.abs(st.apply(np.exp(t)) - np.exp(t))
        errs.append(float(err[0]))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 6.0


def test_derivative_stencils_validation():
    t = np.linspace(0.0, 1.0, 30)
    with pytest.raises(ConfigurationError):
        derivative_stencils(t, 5)
    with pytest.raises(ConfigurationError):
        derivative_stencils(t[:4], 3)


def test_apply_preserves_long_double():
    t = np.linspace(0.0, 1.0, 40)
    st = derivative_stencils(t, 1)
    out = st.apply(np.exp(t).astype(np.longdouble))
    assert out.dtype == np.longdouble


def test_to_dense_matches_apply(rng):
    t = np.linspace(-1.0, 1.0, 25)
    st = derivative_stencils(t, 3)
    f = rng.standard_normal(len(t))
    assert np.allclose(st.to_dense() @ f, st.apply(f), atol=1e-12)


def test_scale_rows():
    t = np.linspace(0.0, 1.0, 20)
    st = derivative_stencils(t, 1)
    d = np.linspace(1.0, 2.0, 20)
    f = np.cos(t)
    assert np.allclose(st.scale_rows(d).apply(f), d * st.apply(f))


def test_stirling_chain_rule_identity():
    # (c d/dc)^k c^p = p^k c^p  <=>  sum_j S(k,j) p(p-1)..(p-j+1) = p^k
    from cscklab.fd import _STIRLING
    for k, row in _STIRLING.items():
        for p in range(1, 7):
            total = 0.0
            for j, s in row.items():
                total += s * math.prod(range(p - j + 1, p + 1))
            assert total == pytest.approx(float(p**k))


def test_nodeset_uniform_matches_plain_stencils(rng):
    t = np.linspace(-2.0, 2.0, 50)
    ns = NodeSet.uniform(t, n=3)
    f = rng.standard_normal(len(t))
    for m in range(1, 5):
        a = ns.derivative_stencils(m).apply(f)
        b = derivative_stencils(t, m).apply(f)
        assert np.allclose(a, b, atol=1e-12)


def _chart_nodeset(tag: int, n: int = 3, shift: float = 0.0) -> NodeSet:
    # half-offset nodes in the chart coordinate, like the glued grids use
    if tag == CHART_S:
        s = (np.arange(40) + 0.5) * 0.02
        t = shift + np.log(s) / n
        coord = s
    else:
        x = ((np.arange(40) + 0.5) * 0.02)[::-1]
        t = -np.log(x)
        coord = x
    tags = np.full(len(t), tag, dtype=np.int8)
    return NodeSet(t=t, tag=tags, coord=coord, n=n, shift=shift)


def test_s_chart_rows_exact_on_chart_polynomials():
    # f = s^2 = e^{2n(t-shift)}; chart weights are Fornberg-exact on it
    shift = -5.0
    ns = _chart_nodeset(CHART_S, n=3, shift=shift)
    f = np.exp(6.0 * (ns.t - shift))
    for m in range(1, 5):
        got = ns.derivative_stencils(m).apply(f)
        want = 6.0**m * f
        assert np.allclose(got, want, rtol=1e-8)


def test_x_chart_rows_exact_on_chart_polynomials():
    # f = x^3 = e^{-3t}; rows at the ends use short one-sided windows that
    # are only degree-2 exact, so compare interior rows
    ns = _chart_nodeset(CHART_X)
    f = np.exp(-3.0 * ns.t)
    for m in range(1, 5):
        got = ns.derivative_stencils(m).apply(f)
        want = (-3.0) ** m * f
        assert np.allclose(got[3:-3], want[3:-3], rtol=1e-8)


def test_nodeset_rejects_nonmonotone():
    t = np.array([0.0, 1.0, 0.5])
    with pytest.raises(ConfigurationError):
        NodeSet.uniform(t, n=3)


def test_stencil_cache_returns_same_object():
    ns = NodeSet.uniform(np.linspace(0, 1, 30), n=2)
    assert ns.derivative_stencils(2) is ns.derivative_stencils(2)
