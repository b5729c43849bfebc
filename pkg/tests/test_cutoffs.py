"""Transition profiles: endpoint flatness, monotonicity, ramp algebra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cscklab.cutoffs import Ramp, smoothstep


def test_classical_quintic():
    s = smoothstep(2)
    x = np.linspace(0.0, 1.0, 11)
    assert np.allclose(s(x), 6 * x**5 - 15 * x**4 + 10 * x**3, atol=1e-13)


def test_continuation_values():
    s = smoothstep(5)
    assert s(-3.0) == 0.0
    assert s(0.0) == 0.0
    assert s(1.0) == 1.0
    assert s(7.5) == 1.0


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_endpoint_flatness(m):
    # S^(k) vanishes like distance^{m+1-k} at both ends for k <= m, so a
    # decade step toward the endpoint shrinks it by ~10^{m+1-k}
    s = smoothstep(m)
    for k in range(1, m + 1):
        for a, b in ((1e-2, 1e-3), (1.0 - 1e-2, 1.0 - 1e-3)):
            ratio = abs(s.derivative(a, k)) / abs(s.derivative(b, k))
            assert ratio > 0.5 * 10.0 ** (m + 1 - k)
        assert s.derivative(-1.0, k) == 0.0
        assert s.derivative(2.0, k) == 0.0


def test_symmetry():
    s = smoothstep(5)
    x = np.linspace(0.0, 1.0, 101)
    assert np.allclose(s(x) + s(1.0 - x), 1.0, atol=1e-12)


@given(m=st.integers(1, 6), x=st.floats(-2.0, 3.0))
@settings(max_examples=200, deadline=None)
def test_range_and_slope_sign(m, x):
    s = smoothstep(m)
    v = s(x)
    assert 0.0 <= v <= 1.0
    assert s.derivative(x, 1) >= 0.0


def test_antiderivative():
    s = smoothstep(3)
    x = np.linspace(-0.5, 2.0, 2501)
    numeric = np.concatenate(
        [[0.0], np.cumsum((s(x)[1:] + s(x)[:-1]) / 2.0 * np.diff(x))])
    numeric += s.antiderivative(x[0])
    assert np.allclose(s.antiderivative(x), numeric, atol=1e-6)
    assert s.antiderivative(4.0) == pytest.approx(3.5)


def test_ramp_transition_window():
    r = smoothstep(5).on(2.0, 6.0)
    assert r(1.9) == 0.0
    assert r(6.1) == 1.0
    assert r(4.0) == pytest.approx(0.5)
    # chain rule: d/dx picks up 1/(x1-x0) per order
    fine = 1e-6
    num = (r(4.0 + fine) - r(4.0 - fine)) / (2 * fine)
    assert r.derivative(4.0, 1) == pytest.approx(num, rel=1e-6)


def test_ramp_rejects_collapsed_window():
    with pytest.raises(ValueError):
        Ramp(smoothstep(2), 1.0, 1.0)


def test_bad_order_rejected():
    with pytest.raises(ValueError):
        smoothstep(0)
    with pytest.raises(ValueError):
        smoothstep(2).derivative(0.5, -1)
