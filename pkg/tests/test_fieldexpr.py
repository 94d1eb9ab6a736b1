import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fluctgeom.charts import ControlParams, Point
from fluctgeom.errors import DomainError
from fluctgeom.fieldexpr import (
    ArityError, EvalContext, FieldDomainError, ParseError, UnknownIdentifierError, eval_field, parse_field,
    print_field,
)
from fluctgeom.geometry import fd_gradient


def ev(src, x=(0.0,), theta=(), nx=None, nt=None):
    e = parse_field(src, len(x) if nx is None else nx, len(theta) if nt is None else nt)
    return eval_field(e, EvalContext(Point(x), ControlParams(theta)))


def test_grammar_cases():
    e = parse_field("exp(-(x1^2+x2^2)/2)", 2)
    assert ev("exp(-(x1^2+x2^2)/2)", (1.0, 2.0)) == pytest.approx(math.exp(-2.5))
    assert e.nx == 2
    assert ev("erfc(t1/sqrt(2))", (0.0,), (1.0,)) == pytest.approx(math.erfc(1 / math.sqrt(2)), rel=1e-15)


def test_precedence_and_associativity():
    assert ev("2^3^2") == 512.0
    assert ev("-2^2") == -4.0
    assert ev("2*3+4/2-1") == 7.0
    assert ev("(1+2)*3") == 9.0
    assert ev("min(3, 2) + max(-1, abs(-4))") == 6.0


def test_unknown_identifier_and_arity():
    with pytest.raises(UnknownIdentifierError):
        parse_field("x3", 2)
    with pytest.raises(UnknownIdentifierError):
        parse_field("t1", 1, 0)
    with pytest.raises(UnknownIdentifierError):
        parse_field("foo(x1)", 1)
    with pytest.raises(ArityError):
        parse_field("min(x1)", 1)
    with pytest.raises(ArityError):
        parse_field("exp(x1, x1)", 1)


def test_syntax_error_position():
    with pytest.raises(ParseError) as info:
        parse_field("x1 +\n  * 2", 1)
    assert info.value.line == 2
    assert info.value.column == 3
    with pytest.raises(ParseError):
        parse_field("", 1)
    with pytest.raises(ParseError):
        parse_field("(x1", 1)


def test_error_function_values():
    assert ev("erf(0)") == 0.0
    assert ev("erfc(0)") == 1.0


def test_sqrt_pi_forms_match_gaussian_integral():
    oracle = integrate.quad(lambda s: math.exp(-s * s), -np.inf, np.inf, epsabs=1e-14)[0]
    assert ev("sqrt(pi)") == pytest.approx(oracle, rel=1e-13)
    assert ev("exp(0.5*log(pi))") == pytest.approx(oracle, rel=1e-13)


def test_domain_errors_carry_subexpression():
    with pytest.raises(FieldDomainError) as info:
        ev("1 + log(x1 - 2)", (1.0,))
    assert "log" in info.value.subexpression
    with pytest.raises(DomainError):
        ev("sqrt(-x1)", (1.0,))
    with pytest.raises(DomainError):
        ev("1/(x1-1)", (1.0,))
    with pytest.raises(DomainError):
        ev("(-2)^0.5")


def test_context_dimension_mismatch():
    e = parse_field("x1 + x2", 2)
    with pytest.raises(DomainError):
        eval_field(e, EvalContext(Point([1.0]), ControlParams()))
    e = parse_field("t2", 1, 2)
    with pytest.raises(DomainError):
        eval_field(e, EvalContext(Point([1.0]), ControlParams([1.0])))


def test_vectorized_call():
    e = parse_field("x1*x2 + t1", 2, 1)
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(e(x, [0.5]), [2.5, 12.5])


@given(st.floats(-6, 6))
def test_erf_erfc_sum(s):
    assert ev("erf(x1) + erfc(x1)", (s,)) == pytest.approx(1.0, abs=1e-14)


atoms = st.sampled_from(["x1", "x2", "t1", "pi", "e", "1", "2.5", "0.125"])


def compound(children):
    unary = st.builds(lambda f, a: f"{f}({a})", st.sampled_from(["sin", "cos", "exp", "abs", "erf", "erfc"]),
                      children)
    binary = st.builds(lambda a, op, b: f"({a}) {op} ({b})", children, st.sampled_from(["+", "-", "*"]), children)
    two = st.builds(lambda f, a, b: f"{f}({a}, {b})", st.sampled_from(["min", "max"]), children, children)
    neg = st.builds(lambda a: f"-{a}", children)
    power = st.builds(lambda a, b: f"({a})^{b}", children, st.sampled_from(["2", "3", "-1"]))
    return unary | binary | two | neg | power


expressions = st.recursive(atoms, compound, max_leaves=10)


@given(expressions)
def test_parse_print_parse_fixpoint(src):
    e = parse_field(src, 2, 1)
    again = parse_field(print_field(e), 2, 1)
    assert again.root == e.root
    assert print_field(again) == print_field(e)


smooth = st.recursive(
    st.sampled_from(["x1", "x2", "t1", "0.5", "pi"]),
    lambda c: (st.builds(lambda f, a: f"{f}({a})", st.sampled_from(["sin", "cos", "erf"]), c)
               | st.builds(lambda a, op, b: f"({a}) {op} ({b})", c, st.sampled_from(["+", "-", "*"]), c)),
    max_leaves=8,
)


@given(smooth, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_gradient_self_consistency(src, a, b):
    e = parse_field(src, 2, 1)
    x = np.array([a, b])
    f = lambda p: e(p, [0.7])  # noqa: E731
    g2 = fd_gradient(f, x, 1e-5, 2)
    g4 = fd_gradient(f, x, 1e-3, 4)
    assert np.allclose(g2, g4, rtol=1e-6, atol=1e-6)
