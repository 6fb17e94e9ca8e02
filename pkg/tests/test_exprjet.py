import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ifcompact.exprjet import (
    Add, ArityError, Call, Div, DomainError, ExprSyntaxError, Jet2, Mul, Neg, Num, Pow,
    UnknownIdentifierError, Var, eval_expr, flat_index, full, high, jet_compose_univariate,
    jet_eval, low, ncoef, parse_expr, partial, to_text,
)

# --------------------------------------------------------------------------
# index sets


def test_ncoef_and_flat_index():
    assert [ncoef(K) for K in range(5)] == [1, 3, 6, 10, 15]
    seen = [flat_index(m, n) for m, n in full(6).pairs]
    assert seen == list(range(ncoef(6)))


def test_graded_order_within_degree():
    assert full(2).pairs == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


@pytest.mark.parametrize("M", range(0, 8))
def test_low_set_size(M):
    assert len(low(M + 1)) == 2 * M + 3
    assert len(low(M)) + len(high(M)) == ncoef(M)
    assert all(m <= 1 for m, _ in low(M).pairs)
    assert all(m >= 2 for m, _ in high(M).pairs)


# --------------------------------------------------------------------------
# parser


def test_parse_precedence():
    e = parse_expr("1 + 2 * x^2 - y / 4")
    assert eval_expr(e, 3.0, 2.0) == pytest.approx(1 + 18 - 0.5)
    assert eval_expr(parse_expr("-x^2"), 3.0, 0.0) == -9.0
    assert eval_expr(parse_expr("2^3"), 0.0, 0.0) == 8.0


def test_pi_and_functions():
    e = parse_expr("sin(pi / 2) + cos(0) + exp(0) + log(1) + sqrt(4) + tan(0)")
    assert eval_expr(e, 0.0, 0.0) == pytest.approx(5.0)
    assert to_text(parse_expr("2 * pi")) == "2 * pi"


@pytest.mark.parametrize("text,offset", [("sin(+)", 4), ("x + ", 4), ("(x", 2), ("x $ y", 2)])
def test_syntax_error_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(text)
    assert info.value.offset == offset


def test_identifier_and_arity_errors():
    with pytest.raises(UnknownIdentifierError):
        parse_expr("z + 1")
    with pytest.raises(UnknownIdentifierError):
        parse_expr("foo(x)")
    with pytest.raises(ArityError):
        parse_expr("sin(x, y)")
    with pytest.raises(ArityError):
        parse_expr("sin + 1")
    with pytest.raises(ExprSyntaxError):
        parse_expr("x^y")


def test_domain_errors():
    with pytest.raises(DomainError):
        eval_expr(parse_expr("log(x)"), 0.0, 0.0)
    with pytest.raises(DomainError):
        eval_expr(parse_expr("sqrt(x)"), -1.0, 0.0)
    with pytest.raises(DomainError):
        eval_expr(parse_expr("1 / x"), np.array([1.0, 0.0]), 0.0)


def test_vectorized_evaluation():
    x = np.linspace(-1, 1, 7)
    y = np.linspace(0, 2, 7)
    np.testing.assert_allclose(eval_expr(parse_expr("x * y + 1"), x, y), x * y + 1)


leaves = st.one_of(
    st.sampled_from([Var("x"), Var("y")]),
    st.floats(min_value=0, max_value=1e6, allow_nan=False).map(Num),
    st.integers(0, 50).map(lambda k: Num(float(k))),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(children, children).map(lambda t: Add(*t)),
        st.tuples(children, children).map(lambda t: Mul(*t)),
        st.tuples(children, children).map(lambda t: Div(*t)),
        st.tuples(children, st.integers(0, 4)).map(lambda t: Pow(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "sqrt", "log", "tan"]), children)
        .map(lambda t: Call(*t)),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_round_trip(e):
    assert parse_expr(to_text(e)) == e


# --------------------------------------------------------------------------
# jets against a symbolic oracle

X, Y = sp.symbols("x y")


def _sym(text):
    return sp.sympify(text.replace("^", "**"), locals={"x": X, "y": Y})


def _sym_taylor(text, x0, y0, K):
    f = _sym(text)
    out = np.zeros(ncoef(K))
    for (m, n) in full(K).pairs:
        d = sp.diff(f, X, m, Y, n) if m + n else f
        out[flat_index(m, n)] = float(d.subs({X: x0, Y: y0})) / (math.factorial(m) * math.factorial(n))
    return out


ORACLE_CASES = [
    "x^4 + 2*y^4 - 2",
    "sin(3.5*x)*(x^2 + y^2 - 2)",
    "exp(x - y)/(2 + cos(x)*sin(y))",
    "sqrt(1 + x^2 + y^2)*log(3 + x*y)",
    "tan(x/3 + y/5)",
    "10*(2 + cos(x)*cos(y))",
]


@pytest.mark.parametrize("text", ORACLE_CASES)
def test_jet_matches_symbolic_taylor(text):
    x0, y0, K = 0.37, -0.21, 5
    got = jet_eval(parse_expr(text), (x0, y0), K).coeffs
    want = _sym_taylor(text, x0, y0, K)
    np.testing.assert_allclose(got, want, rtol=1e-11, atol=1e-11 * np.abs(want).max())


def test_jet_batched_center():
    xs = np.array([0.1, -0.4, 1.2])
    ys = np.array([0.3, 0.5, -0.7])
    j = jet_eval(parse_expr("exp(x)*sin(y)"), (xs, ys), 3)
    assert j.coeffs.shape == (3, ncoef(3))
    for k in range(3):
        one = jet_eval(parse_expr("exp(x)*sin(y)"), (xs[k], ys[k]), 3)
        np.testing.assert_allclose(j.coeffs[k], one.coeffs, rtol=1e-14)


def test_partial_values():
    j = jet_eval(parse_expr("x^3 * y^2"), (2.0, 3.0), 5)
    assert partial(j, 0, 0) == pytest.approx(72.0)
    assert partial(j, 3, 2) == pytest.approx(12.0)
    assert partial(j, 2, 1) == pytest.approx(6 * 2 * 2 * 3)


def test_exp_coefficients():
    j = jet_compose_univariate("exp", Jet2.variable("x", (0.0, 0.0), 6))
    want = [1 / math.factorial(k) for k in range(7)]
    np.testing.assert_allclose([j.coefficient(k, 0) for k in range(7)], want, rtol=1e-15)


coef_arrays = st.lists(st.floats(-3, 3, allow_nan=False), min_size=ncoef(4), max_size=ncoef(4))


@settings(max_examples=60, deadline=None)
@given(coef_arrays, coef_arrays, coef_arrays)
def test_jet_algebra_properties(a, b, c):
    A, B, C = (Jet2(np.array(v), 4) for v in (a, b, c))
    np.testing.assert_allclose((A * B).coeffs, (B * A).coeffs, atol=1e-12)
    np.testing.assert_allclose(((A * B) * C).coeffs, (A * (B * C)).coeffs, atol=1e-9)
    np.testing.assert_allclose((A * (B + C)).coeffs, (A * B + A * C).coeffs, atol=1e-10)
    # Leibniz rule, truncated one degree lower
    lhs = (A * B).diff(0)
    rhs = A.diff(0) * B.truncate(3) + A.truncate(3) * B.diff(0)
    np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(coef_arrays)
def test_division_inverts_product(a):
    A = Jet2(np.array(a), 4)
    B = jet_eval(parse_expr("2 + sin(x) * y"), (0.3, 0.4), 4)
    np.testing.assert_allclose(((A * B) / B).coeffs, A.coeffs, atol=1e-10)
