import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfoc.errors import ExpressionDomainError, ExpressionError
from mfoc.problem.expr import (
    FUNCTIONS,
    BinOp,
    Call,
    Neg,
    Num,
    Var,
    compile_expression,
    compile_guard,
    eval_expression,
    eval_guard,
    parse_expression,
    parse_guard,
    render,
    variables,
)


def ev(text, n_x=2, n_u=1, **bind):
    return eval_expression(parse_expression(text, n_x, n_u, allow_delayed=True), **bind)


def test_sum():
    assert eval_expression(parse_expression("x1 + u1", 1, 1), x=[2.0], u=[3.0]) == 5


def test_delayed_field():
    e = parse_expression("x1 + xd1 + u1", 1, 1, allow_delayed=True)
    assert eval_expression(e, x=[1.0], xd=[1.0], u=[0.0]) == 2


def test_power_right_associative():
    assert ev("2^3^2") == 512


def test_unary_minus_looser_than_power():
    assert ev("-x1^2", x=[2.0, 0.0]) == -4
    assert ev("(-x1)^2", x=[2.0, 0.0]) == 4
    assert ev("2^-1") == 0.5


def test_misc_values():
    assert ev("sin(t)", t=0.0) == 0
    assert ev("x1*x1 + u1*u1", x=[2.0, 0.0], u=[1.0]) == 5
    assert ev("1 - 2 - 3") == -4
    assert ev("8 / 4 / 2") == 1
    assert ev("1 + 2 * 3") == 7
    assert ev("1.5e2 + .5") == 150.5
    assert ev("abs(-3) + sqrt(16) + exp(0) + log(1) + tanh(0) + cos(0) + tan(0)") == 9


@pytest.mark.parametrize("text, where", [
    ("x1 +", (1, 5)),
    ("x1 $ 2", (1, 4)),
    ("(x1 + 2", (1, 8)),
    ("x1\n  + * 2", (2, 5)),
])
def test_syntax_error_position(text, where):
    with pytest.raises(ExpressionError) as err:
        parse_expression(text, 1, 1)
    assert (err.value.line, err.value.column) == where
    assert f"line {where[0]}, column {where[1]}" in str(err.value)


@pytest.mark.parametrize("text", ["x3 + 1", "u2", "xd1", "foo", "y1"])
def test_undeclared_variables(text):
    with pytest.raises(ExpressionError):
        parse_expression(text, 2, 1)


@pytest.mark.parametrize("text", ["sin()", "sin(1, 2)", "sin", "max(x1)"])
def test_function_arity_and_names(text):
    with pytest.raises(ExpressionError):
        parse_expression(text, 1, 1)


@pytest.mark.parametrize("text", ["log(x1 - 1)", "sqrt(-1)", "1 / (x1 - 1)", "(x1 - 2)^0.5"])
def test_domain_errors_name_subexpression(text):
    e = parse_expression(text, 1, 1)
    with pytest.raises(ExpressionDomainError) as err:
        eval_expression(e, x=[1.0])
    assert "in (" in str(err.value) or "in log" in str(err.value) or "in sqrt" in str(err.value)


def test_compiled_out_of_domain_is_nan():
    f = compile_expression(parse_expression("log(x1)", 1, 1))
    with np.errstate(all="ignore"):
        out = f(np.array([[-1.0], [1.0]]), None, 0.0)
    assert math.isnan(out[0]) and out[1] == 0


def test_guard_examples():
    g = parse_guard("x1 <= -5 && x2 <= -5", 2)
    assert eval_guard(g, x=[-8, -6]) and not eval_guard(g, x=[-4, -6])
    g = parse_guard("x1 < x2 && (x1 < -2 || x2 < -2)", 2)
    assert eval_guard(g, x=[-4, -3]) and not eval_guard(g, x=[0, 1])
    assert eval_guard(parse_guard("true", 2), x=[0, 0])
    assert eval_guard(parse_guard("(x1 > 0) || t >= 1", 1), x=[-1], t=1.0)


def test_guard_rejects_input():
    with pytest.raises(ExpressionError):
        parse_guard("u1 > 0", 2)
    with pytest.raises(ExpressionError):
        parse_guard("x1", 2)


def test_compiled_guard_matches_tree():
    g = parse_guard("x1 < x2 && (x1 < -2 || x2 < -2) || x1 >= 3", 2)
    pts = np.random.default_rng(0).uniform(-6, 6, size=(500, 2))
    fast = compile_guard(g)(pts, 0.0)
    slow = [eval_guard(g, x=p) for p in pts]
    np.testing.assert_array_equal(fast, slow)


def test_variables():
    assert variables(parse_expression("x1 * t + sin(u1) - xd2", 2, 1, allow_delayed=True)) == {
        "x1", "t", "u1", "xd2"}


# -- random trees --------------------------------------------------------------

def random_tree(rng, depth):
    if depth == 0 or rng.random() < 0.25:
        k = rng.integers(4)
        if k == 0:
            return Num(float(np.round(rng.uniform(0, 3), 3)))  # literals are unsigned in the grammar
        if k == 1:
            return Var("x", int(rng.integers(1, 3)))
        if k == 2:
            return Var("u", 1)
        return Var("t")
    k = rng.integers(6)
    if k == 0:
        return Neg(random_tree(rng, depth - 1))
    if k == 1:
        return Call(str(rng.choice(FUNCTIONS)), random_tree(rng, depth - 1))
    if k == 2:
        return BinOp("^", random_tree(rng, depth - 1), Num(float(rng.integers(0, 4))))
    return BinOp(str(rng.choice(["+", "-", "*", "/"])), random_tree(rng, depth - 1), random_tree(rng, depth - 1))


def test_round_trip_random_trees():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        e = random_tree(rng, 5)
        assert parse_expression(render(e), 2, 1) == e


def test_compiled_matches_tree_walk():
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(1000):
        e = random_tree(rng, 4)
        x, u, t = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 1), float(rng.uniform(0, 2))
        try:
            want = eval_expression(e, x=x, u=u, t=t)
        except ExpressionDomainError:
            continue
        with np.errstate(all="ignore"):
            got = float(np.asarray(compile_expression(e)(x[None], u[None], t)).reshape(-1)[0])
        if math.isfinite(want):
            assert abs(got - want) <= 1e-15 * abs(want) or got == want, (render(e), got, want)
            checked += 1
    assert checked > 700


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-100, 100), b=st.floats(-100, 100), c=st.floats(0.1, 10))
def test_precedence_against_python(a, b, c):
    e = parse_expression("x1 + x2 * u1 - x1 / u1 ^ 2", 2, 1)
    assert eval_expression(e, x=[a, b], u=[c]) == a + b * c - a / c**2
