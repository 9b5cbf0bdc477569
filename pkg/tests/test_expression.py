import math

import gmpy2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwchaos.errors import ExpressionDomainError, ExpressionSyntaxError
from pwchaos.expression import Expression, compile_vector

LEAVES = st.one_of(
    st.sampled_from(["x", "y", "t", "eps", "pi", "e"]),
    st.floats(min_value=-50, max_value=50, allow_nan=False).map(repr),
    st.integers(min_value=0, max_value=9).map(str),
)
UNARY = ["sin", "cos", "exp", "log", "sqrt", "abs", "sign", "tanh"]


def _grow(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*/^"), children).map(
            lambda p: f"({p[0]}) {p[1]} ({p[2]})"),
        st.tuples(st.sampled_from(UNARY), children).map(lambda p: f"{p[0]}({p[1]})"),
        children.map(lambda c: f"-({c})"),
        st.tuples(children, children).map(lambda p: f"pow({p[0]}, {p[1]})"),
    )


TREES = st.recursive(LEAVES, _grow, max_leaves=12)
POINTS = st.tuples(*[st.floats(min_value=-3, max_value=3, allow_nan=False)] * 4)


def _outcome(fn, p):
    try:
        return ("ok", fn(*p))
    except ExpressionDomainError:
        return ("err", None)


def _same(a, b):
    if a[0] != b[0]:
        return False
    if a[0] == "err":
        return True
    u, v = a[1], b[1]
    return u == v or (math.isnan(u) and math.isnan(v))


@settings(max_examples=200)
@given(TREES, st.lists(POINTS, min_size=20, max_size=20))
def test_print_parse_round_trip_is_bit_exact(text, points):
    e1 = Expression.parse(text)
    e2 = Expression.parse(str(e1))
    assert str(e2) == str(e1)
    for p in points:
        assert _same(_outcome(e1, p), _outcome(e2, p))


def test_precedence_and_associativity():
    e = Expression.parse("2^3^2")
    assert e(0, 0) == 2.0 ** 9
    assert Expression.parse("-2^2")(0, 0) == -4.0
    assert Expression.parse("1 - 2 - 3")(0, 0) == -4.0
    assert Expression.parse("8 / 4 / 2")(0, 0) == 1.0


def test_named_constants_and_variables():
    e = Expression.parse("x*sin(2*pi*t) + eps*e")
    assert e(2.0, 0.0, 0.25, 1.0) == pytest.approx(2.0 + math.e)


def test_sign_of_zero_is_zero():
    assert Expression.parse("sign(x)")(0.0, 0.0) == 0.0
    assert Expression.parse("sign(x)")(-0.5, 0.0) == -1.0


@pytest.mark.parametrize("text, point", [("1/x", (0.0, 0.0)), ("log(x)", (-1.0, 0.0)),
                                         ("log(x)", (0.0, 0.0)), ("sqrt(x)", (-1.0, 0.0))])
def test_domain_errors_are_reported(text, point):
    with pytest.raises(ExpressionDomainError):
        Expression.parse(text)(*point)


@pytest.mark.parametrize("text, column", [("x + * y", 5), ("foo + 1", 1), ("sin(x", 6),
                                          ("x $ y", 3), ("q(x)", 1)])
def test_syntax_errors_carry_line_and_column(text, column):
    with pytest.raises(ExpressionSyntaxError) as info:
        Expression.parse(text)
    assert info.value.details == {"line": 1, "column": column}


def test_wrong_arity():
    with pytest.raises(ExpressionSyntaxError):
        Expression.parse("pow(x)")


def test_symbolic_derivative():
    e = Expression.parse("x^3 + sin(y)*x - exp(2*x)")
    d = e.diff("x")
    for x, y in [(0.3, -1.2), (1.5, 0.7)]:
        want = 3 * x ** 2 + math.sin(y) - 2 * math.exp(2 * x)
        assert d(x, y) == pytest.approx(want, rel=1e-14)
    assert e.diff("t").is_zero()
    assert not e.depends_on("t") and e.depends_on("y")


def test_polynomial_detection():
    assert Expression.parse("y - 2*x^2").is_polynomial()
    assert not Expression.parse("x*sin(t)").is_polynomial()


def test_multiprecision_matches_float_and_goes_further():
    e = Expression.parse("exp(x) - 1 - x")
    with gmpy2.context(precision=256):
        mp = e.compiled_mp(256)(gmpy2.mpfr("1e-20"), 0, 0, 0)
        assert abs(mp - gmpy2.mpfr("5e-41")) < gmpy2.mpfr("1e-60")
    assert e(0.5, 0) == pytest.approx(math.exp(0.5) - 1.5, rel=1e-15)


def test_compile_vector():
    f = compile_vector([Expression.parse("y - x^2"), Expression.parse("x - 2*x^2")])
    assert f(1.0, 0.0, 0.0, 0.0) == (-1.0, -1.0)
