import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from hjbseries.exceptions import DomainError, ProblemFileError
from hjbseries.expr import Bin, Const, Pow, Var, X, parse


def mp_eval(e, x):
    """Evaluate an expression tree in mpmath arithmetic."""
    if isinstance(e, Const):
        return mpmath.mpf(e.value)
    if isinstance(e, Var):
        return x
    if isinstance(e, Bin):
        a, b = mp_eval(e.a, x), mp_eval(e.b, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        return a * b if e.op == "*" else a / b
    if isinstance(e, Pow):
        return mp_eval(e.base, x) ** e.p
    return {"ln": mpmath.log, "exp": mpmath.exp, "sin": mpmath.sin,
            "cos": mpmath.cos}[e.name](mp_eval(e.arg, x))


def central_fd(e, x0, k):
    # central differences at 50 digits, so step and rounding errors vanish
    with mpmath.workdps(50):
        return float(mpmath.diff(lambda t: mp_eval(e, t), mpmath.mpf(x0), k))


def test_jet_examples():
    np.testing.assert_allclose(parse("ln(1+x)").jet(0.0, 3), [0, 1, -0.5, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(parse("ln(1+x)").jet(1.0, 2), [math.log(2), 0.5, -0.125], atol=1e-15)
    np.testing.assert_allclose(parse("5").jet(2.3, 3), [5, 0, 0, 0])
    np.testing.assert_allclose(parse("ln(1+x)^2").jet(0.0, 4), [0, 0, 1, -1, 11 / 12], atol=1e-15)


def test_parse_variants():
    assert parse("log(1+x)")(np.array(0.5)) == pytest.approx(math.log(1.5))
    assert parse("-x^2 + 3*x/2")(np.array(2.0)) == pytest.approx(-1.0)
    e = (X + 1) ** 2 * 3
    assert e(np.array(1.0)) == pytest.approx(12.0)
    assert parse("exp(x)*sin(x) + cos(x)")(np.array(0.0)) == pytest.approx(1.0)


@pytest.mark.parametrize("text", ["x +", "y + 1", "sqrt(x)", "x^0.5", "x[0]", "lambda: 1"])
def test_parse_errors(text):
    with pytest.raises(ProblemFileError):
        parse(text)


def test_domain_errors():
    with pytest.raises(DomainError):
        parse("ln(1+x)").jet(-1.0, 2)
    with pytest.raises(DomainError):
        parse("ln(1+x)")(np.array([-2.0, 0.0]))
    with pytest.raises(DomainError):
        parse("1/x")(np.array([0.0]))
    with pytest.raises(DomainError):
        parse("x^-2")(np.array([0.0]))


SMOOTH = [
    "ln(1+x)^2", "exp(x)*sin(2*x)", "cos(x)/(2+x)", "(x+1)^3 - 4*x", "exp(-x^2)",
    "ln(3+sin(x))", "x^-1 + x",
]


@given(st.sampled_from(SMOOTH), st.floats(0.2, 1.5))
def test_jets_match_finite_differences(text, x0):
    e = parse(text)
    c = e.jet(x0, 4)
    for k in range(1, 5):
        exact = c[k] * math.factorial(k)
        assert abs(exact - central_fd(e, x0, k)) <= 1e-5 * (1 + abs(exact))
