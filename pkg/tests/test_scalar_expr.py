import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiberscope.scalar_expr import (
    DomainError,
    ExprSyntaxError,
    NotExactError,
    NotPolynomialError,
    compile_exprs,
    diff,
    evaluate,
    evaluate_exact,
    grad,
    jvp,
    parse_expr,
    parse_map,
    restrict_to_line,
    substitute,
    to_text,
    var,
)

# random expression trees over x1, x2 that stay defined everywhere
leaf = st.one_of(
    st.sampled_from(["x1", "x2"]),
    st.fractions(min_value=-5, max_value=5, max_denominator=6).map(lambda q: f"({q})"),
)


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        children.map(lambda a: f"sqrt(1 + ({a})^2)"),
        children.map(lambda a: f"({a})/(2 + ({a})^2)"),
        st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
    )


texts = st.recursive(leaf, _extend, max_leaves=8)
points = st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=2)


@given(texts)
def test_text_round_trip(text):
    e = parse_expr(text, 2)
    assert parse_expr(to_text(e), 2) == e


@given(texts, points)
def test_compiled_matches_tree_walk(text, p):
    e = parse_expr(text, 2)
    got = compile_exprs([e], 2).at_points(np.array([p]))[0, 0]
    assert math.isclose(got, evaluate(e, p), rel_tol=1e-12, abs_tol=1e-12)


@given(texts, points)
def test_forward_mode_matches_symbolic_derivative(text, p):
    e = parse_expr(text, 2)
    g = grad(e, p)
    for k in (1, 2):
        want = evaluate(diff(e, k), p)
        assert math.isclose(g[k - 1], want, rel_tol=1e-9, abs_tol=1e-9)


@given(texts, points)
def test_derivative_matches_central_difference(text, p):
    e = parse_expr(text, 2)
    h = 1e-6
    for k in (1, 2):
        up, dn = list(p), list(p)
        up[k - 1] += h
        dn[k - 1] -= h
        fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * h)
        assert abs(evaluate(diff(e, k), p) - fd) <= 1e-4 * (1 + abs(fd))


def test_jvp_batches_directional_derivative():
    e = parse_expr("x1^2*x2 + sqrt(1 + x1^2)", 2)
    P = np.array([[0.5, -1.0], [2.0, 3.0]])
    V = np.array([[1.0, 2.0], [0.0, 1.0]])
    vals, dirs = jvp(e, P, V)
    for r in range(2):
        assert math.isclose(vals[r], evaluate(e, P[r]))
        assert math.isclose(dirs[r], grad(e, P[r]) @ V[r])


def test_exact_evaluation():
    assert evaluate_exact(parse_expr("x1^2 + 1/3", 1), [2]) == Fraction(13, 3)
    assert evaluate_exact(parse_expr("sqrt(x1 + 5)", 1), [Fraction(-11, 4)]) == Fraction(3, 2)
    with pytest.raises(NotExactError):
        evaluate_exact(parse_expr("sqrt(x1)", 1), [2])


def test_domain_errors():
    with pytest.raises(DomainError):
        evaluate(parse_expr("sqrt(x1)", 1), [-1.0])
    with pytest.raises(DomainError):
        evaluate(parse_expr("1/x1", 1), [0.0])


def test_syntax_errors_carry_position():
    with pytest.raises(ExprSyntaxError) as exc:
        parse_expr("x1 + * 2", 1)
    assert (exc.value.line, exc.value.col) == (1, 6)
    with pytest.raises(ExprSyntaxError):
        parse_expr("x3", 2)
    with pytest.raises(ExprSyntaxError):
        parse_expr("#semialgebraic\nsin(x1)", 1)


def test_definitions_and_map_parsing():
    m = parse_map("# helper\nA = x1/sqrt(1 + x1^2)\nf1 = A*x2\nf2 = x2\n")
    assert m.n == 2 and m.semialgebraic
    assert math.isclose(evaluate(m[1], [1.0, 2.0]), 2 / math.sqrt(2))
    t = parse_map("f1 = exp(x1)\nf2 = x2\n")
    assert not t.semialgebraic
    with pytest.raises(ExprSyntaxError):
        parse_map("f1 = x1\nf3 = x2\n")


def test_restrict_to_line_is_exact():
    p = restrict_to_line(parse_expr("x1^2 + x2", 2), [1, 0], [1, 1])
    assert p.coeffs == (1, 3, 1)
    with pytest.raises(NotPolynomialError):
        restrict_to_line(parse_expr("sqrt(1 + x1^2)", 1), [0], [1])


def test_substitute():
    e = substitute(parse_expr("x1*x2", 2), {2: var(1)})
    assert evaluate(e, [3.0, 0.0]) == 9.0
