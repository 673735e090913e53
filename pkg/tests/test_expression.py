import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mhardy.errors import ExpressionError, UnknownNameError
from mhardy.expression import parse_expression


def test_power_value():
    assert parse_expression("t^0.8")(t=2.0) == pytest.approx(2.0**0.8, abs=1e-12)
    assert parse_expression("t^0.8")(t=2.0) == pytest.approx(1.7411, abs=1e-4)


def test_empty_source_reports_position_zero():
    with pytest.raises(ExpressionError) as info:
        parse_expression("")
    assert info.value.position == 0


def test_plug_in_and_depth():
    tree = parse_expression("exp(-|x|^2) * (1 + 0.5*cos(x1))")
    assert tree.depth() == 4
    assert tree.evaluate({"x1": 0.0, "|x|": 0.0}) == pytest.approx(1.5, abs=1e-15)


def test_unknown_identifier_is_a_name_error():
    with pytest.raises(NameError):
        parse_expression("y + 1")
    with pytest.raises(UnknownNameError):
        parse_expression("x1 + foo(2)")


def test_error_carries_line_and_column():
    with pytest.raises(ExpressionError) as info:
        parse_expression("1 +\n  * 2")
    assert (info.value.line, info.value.column) == (2, 3)


@pytest.mark.parametrize(
    "src, env, expected",
    [
        ("ln(e)", {}, 1.0),
        ("log(e^2)", {}, 2.0),
        ("min(t, t^2)", {"t": 0.5}, 0.25),
        ("max(t, t^2)", {"t": 0.5}, 0.5),
        ("sqrt(abs(-4))", {}, 2.0),
        ("  2 *   x1 -x2 ", {"x1": 3.0, "x2": 1.0}, 5.0),
        ("2^-1", {}, 0.5),
        ("-t^2", {"t": 3.0}, -9.0),
        ("|x1 - 3|", {"x1": 1.0}, 2.0),
        ("sin(pi/2)", {}, 1.0),
    ],
)
def test_grammar_cases(src, env, expected):
    assert parse_expression(src).evaluate(env) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("src", ["1 +", "(1", "min(1)", "exp 2", "1 2", "t^", "|x"])
def test_syntax_errors(src):
    with pytest.raises(ExpressionError):
        parse_expression(src)


def test_vectorized_evaluation_broadcasts():
    t = np.linspace(0, 2, 5)
    out = parse_expression("t * ln(e + t)")(t=t)
    np.testing.assert_allclose(out, t * np.log(np.e + t), rtol=1e-15)


def test_custom_name_set():
    tree = parse_expression("xi1^2 + xi2", names=["xi1", "xi2"])
    assert tree.evaluate({"xi1": 2.0, "xi2": 1.0}) == 5.0
    with pytest.raises(NameError):
        parse_expression("x1", names=["xi1"])


# random expressions, checked against Python's own arithmetic on the same tree
_leaf = st.one_of(
    st.sampled_from(["x1", "x2", "t"]),
    st.floats(0.1, 5.0).map(lambda v: f"{v:.3f}"),
)


def _combine(children):
    unary = st.tuples(st.sampled_from(["exp", "cos", "sin", "abs"]), children).map(
        lambda p: (f"{p[0]}(({p[1][0]})/8)", f"math.{'fabs' if p[0] == 'abs' else p[0]}(({p[1][1]})/8)")
    )
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
        lambda p: (f"({p[0][0]}) {p[1]} ({p[2][0]})", f"({p[0][1]}) {p[1]} ({p[2][1]})")
    )
    ratio = st.tuples(children, children).map(
        lambda p: (f"({p[0][0]}) / (2 + cos({p[1][0]}))", f"({p[0][1]}) / (2 + math.cos({p[1][1]}))")
    )
    power = st.tuples(children, st.integers(1, 3)).map(
        lambda p: (f"({p[0][0]})^{p[1]}", f"({p[0][1]})**{p[1]}")
    )
    return st.one_of(unary, binary, ratio, power)


_exprs = st.recursive(_leaf.map(lambda s: (s, s)), _combine, max_leaves=8)


@given(_exprs, st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 3))
def test_matches_python_arithmetic(pair, x1, x2, t):
    src, py = pair
    env = {"x1": x1, "x2": x2, "t": t}
    expected = eval(py, {"math": math}, dict(env))
    got = parse_expression(src).evaluate(env)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)
