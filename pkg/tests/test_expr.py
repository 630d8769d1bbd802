import math

import pytest
from hypothesis import given, strategies as st

from qfi_lab import jet as J
from qfi_lab.errors import ConfigError
from qfi_lab.expr import compile_expr


def test_values_and_constants():
    fn = compile_expr("2*x^2 - sin(y) + exp(0) + pi")
    assert fn(1.5, 0.3) == pytest.approx(2 * 2.25 - math.sin(0.3) + 1 + math.pi, abs=1e-15)


def test_radius_shortcut_and_params():
    fn = compile_expr("k / r^2 + a", params={"k": -1.0, "a": 0.5})
    assert fn(3.0, 4.0) == pytest.approx(-1 / 25 + 0.5, abs=1e-15)


def test_exact_derivatives_through_jets():
    fn = compile_expr("x*exp(x*y)")
    x, y = J.variables([0.4, -0.7], 2)
    out = fn(x, y)
    e = math.exp(0.4 * -0.7)
    assert out.partial(0).value == pytest.approx(e * (1 - 0.28), rel=1e-14)
    assert out.partial(1).value == pytest.approx(0.16 * e, rel=1e-14)


def test_constant_expression_becomes_a_jet():
    x, y = J.variables([1.0, 2.0], 1)
    out = compile_expr("3")(x, y)
    assert isinstance(out, J.Jet) and out.partial(0).value == 0.0


def test_single_variable():
    fn = compile_expr("s^3 - ln(s)", variables=("s",))
    assert fn(2.0) == pytest.approx(8 - math.log(2), abs=1e-15)
    with pytest.raises(TypeError):
        fn(1.0, 2.0)


@pytest.mark.parametrize("text", [
    "__import__('os')", "x.real", "[x]", "x if y else 1", "open(x)", "lambda: 1", "x < y",
    "'text'", "z + 1", "sin(x, y)", "x // 2", "True",
])
def test_unsafe_or_unknown_input_is_rejected(text):
    with pytest.raises(ConfigError):
        compile_expr(text)


def test_syntax_error():
    with pytest.raises(ConfigError):
        compile_expr("x +* 2")


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_polynomial_matches_python(x, y):
    assert compile_expr("(x - y)^2 - x*x + 2*x*y")(x, y) == pytest.approx(y * y, abs=1e-9)
