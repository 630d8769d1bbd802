import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfi_lab import jet as J

finite = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)
positive = st.floats(min_value=0.2, max_value=3.0)


def test_seed_variables_have_unit_gradient():
    x, y = J.variables([0.3, -1.2], 2)
    assert x.value == pytest.approx(0.3)
    assert x.partial(0).value == 1.0
    assert x.partial(1).value == 0.0
    assert y.partial(1).value == 1.0


def test_elementary_derivatives_match_closed_forms():
    (x,) = J.variables([0.7], 3)
    cases = [
        (J.exp(x), [math.exp(0.7)] * 4),
        (J.sin(x), [math.sin(0.7), math.cos(0.7), -math.sin(0.7), -math.cos(0.7)]),
        (J.log(x), [math.log(0.7), 1 / 0.7, -1 / 0.7 ** 2, 2 / 0.7 ** 3]),
        (J.sqrt(x), [math.sqrt(0.7), 0.5 * 0.7 ** -0.5, -0.25 * 0.7 ** -1.5, 0.375 * 0.7 ** -2.5]),
        (x ** 3, [0.343, 3 * 0.49, 6 * 0.7, 6.0]),
    ]
    for jet, expected in cases:
        got = [float(jet.derivative([0] * m)) for m in range(4)]
        assert got == pytest.approx(expected, rel=1e-13)


def test_mixed_partial_of_product():
    x, y = J.variables([1.5, -0.5], 2)
    f = J.exp(x * y) * J.cos(y)
    # d2/dxdy of e^{xy} cos y
    X, Y = 1.5, -0.5
    expected = math.exp(X * Y) * ((1 + X * Y) * math.cos(Y) - Y * math.sin(Y))
    assert float(f.derivative([0, 1])) == pytest.approx(expected, rel=1e-13)


def test_partial_beyond_order_raises():
    (x,) = J.variables([1.0], 1)
    first = (x * x).partial(0)
    assert first.order == 0
    with pytest.raises(J.JetOrderError):
        first.partial(0)


def test_inverse_matches_numpy_and_its_derivative():
    x, y = J.variables([0.4, 0.9], 2)
    A = J.stack([J.stack([2.0 + x, y]), J.stack([y, 1.0 + x * x])])
    Ainv = J.inverse(A)
    assert np.allclose(Ainv.value, np.linalg.inv(A.value), atol=1e-14)
    # d(A^-1) = -A^-1 dA A^-1
    dA = A.partial(0).value
    expected = -Ainv.value @ dA @ Ainv.value
    assert np.allclose(Ainv.partial(0).value, expected, atol=1e-13)


def test_contract_agrees_with_einsum_on_values():
    x, y = J.variables([0.2, 0.3], 2)
    M = J.stack([J.stack([x, y]), J.stack([y * y, x + 1.0])])
    v = J.stack([J.sin(x), J.cos(y)])
    out = J.contract("ab,b->a", M, v)
    assert np.allclose(out.value, M.value @ v.value)


@given(finite, finite)
@settings(max_examples=60, deadline=None)
def test_value_matches_float_arithmetic(a, b):
    x, y = J.variables([a, b], 2)
    f = (x * x - 3.0 * y) / (1.0 + x * x + y * y) + J.sin(x - y)
    ref = (a * a - 3 * b) / (1 + a * a + b * b) + math.sin(a - b)
    assert float(f.value) == pytest.approx(ref, rel=1e-14, abs=1e-14)


@given(finite, finite)
@settings(max_examples=60, deadline=None)
def test_mixed_partials_commute(a, b):
    x, y = J.variables([a, b], 3)
    f = J.exp(0.3 * x * y) * J.sin(x + 2.0 * y) + x ** 3 * y
    assert float(f.partial(0).partial(1).value) == pytest.approx(float(f.partial(1).partial(0).value),
                                                                 rel=1e-12, abs=1e-12)


@given(positive)
@settings(max_examples=60, deadline=None)
def test_log_exp_roundtrip_keeps_derivatives(a):
    (x,) = J.variables([a], 3)
    f = J.log(J.exp(x))
    assert float(f.value) == pytest.approx(a, rel=1e-14)
    assert float(f.derivative([0])) == pytest.approx(1.0, rel=1e-12)
    assert abs(float(f.derivative([0, 0]))) < 1e-12
