import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuio.errors import ExprEvalError, ExprSyntaxError
from fuio.time_expr import (
    BinOp,
    Call,
    Mul,
    Neg,
    Num,
    Var,
    as_time_expr,
    compile_time_expr,
    compile_time_expr_array,
    eval_time_expr,
    fold_constants,
    is_structurally_zero,
    parse_time_expr,
    to_text,
)


def test_parse_coefficient():
    e = parse_time_expr("2+sin(0.3*t)")
    assert e == BinOp("+", Num(2.0), Call("sin", Mul(Num(0.3), Var())))
    assert e(0.0) == 2.0
    assert math.isclose(e(1.0), 2 + math.sin(0.3))


def test_leading_minus_negates_product():
    e = parse_time_expr("-t*exp(-2*t)")
    assert e == Neg(Mul(Var(), Call("exp", Neg(Mul(Num(2.0), Var())))))
    assert math.isclose(e(1.0), -math.exp(-2.0))


def test_precedence_and_associativity():
    assert parse_time_expr("1-2-3")(0) == -4
    assert parse_time_expr("8/4/2")(0) == 1
    assert parse_time_expr("1+2*3")(0) == 7
    assert parse_time_expr("(1+2)*3")(0) == 9
    assert parse_time_expr("2*-3")(0) == -6
    assert parse_time_expr("--t")(2.0) == 2.0
    assert parse_time_expr("1.5e1 + .5")(0) == 15.5


def test_constants_and_zero():
    assert is_structurally_zero(parse_time_expr("0"))
    assert is_structurally_zero(parse_time_expr("1-1"))
    assert is_structurally_zero(parse_time_expr("0*5"))
    assert not is_structurally_zero(parse_time_expr("0*t"))
    assert not is_structurally_zero(parse_time_expr("1"))
    assert fold_constants(parse_time_expr("2*3+t")) == BinOp("+", Num(6.0), Var())


@pytest.mark.parametrize("text, offset", [
    ("2+", 2),
    ("sin(t", 5),
    ("t)", 1),
    ("foo(t)", 0),
    ("2 $ t", 2),
    ("", 0),
    ("   ", 0),
    ("sin t", 4),
])
def test_syntax_errors_carry_offset(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse_time_expr(text)
    assert info.value.offset == offset


def test_unknown_identifier_message():
    with pytest.raises(ExprSyntaxError, match="unknown identifier 'x'"):
        parse_time_expr("1 + x")


def test_unbalanced_message():
    with pytest.raises(ExprSyntaxError, match="unbalanced"):
        parse_time_expr("(t+1")


def test_byte_offsets_after_multibyte():
    with pytest.raises(ExprSyntaxError) as info:
        parse_time_expr("t + é")
    assert info.value.offset == 4


def test_eval_errors():
    with pytest.raises(ExprEvalError) as info:
        eval_time_expr(parse_time_expr("1/t"), 0.0)
    assert info.value.t == 0.0
    with pytest.raises(ExprEvalError):
        eval_time_expr(parse_time_expr("exp(t)"), 1e4)
    with pytest.raises(ExprEvalError):
        compile_time_expr(parse_time_expr("1/(t-1)"))(1.0)
    with pytest.raises(ExprEvalError):
        compile_time_expr_array(parse_time_expr("1/(t-1)"))(np.array([0.0, 1.0]))


def test_compiled_matches_tree_walk():
    e = parse_time_expr("sin(2*t) + 0.5*cos(5*t) - exp(-t)/3")
    f = compile_time_expr(e)
    fa = compile_time_expr_array(e)
    ts = np.linspace(0, 5, 37)
    ref = np.array([eval_time_expr(e, t) for t in ts])
    assert np.array_equal(np.array([f(t) for t in ts]), ref)
    assert np.allclose(fa(ts), ref, rtol=0, atol=1e-15)
    assert fa(np.zeros(3)).shape == (3,)
    assert compile_time_expr_array(parse_time_expr("2"))(ts).shape == ts.shape


def test_as_time_expr():
    assert as_time_expr(3) == Num(3.0)
    assert as_time_expr("t") == Var()
    with pytest.raises(TypeError):
        as_time_expr(True)
    with pytest.raises(TypeError):
        parse_time_expr(3)


# Random expression trees for the text round trip.
_leaf = st.one_of(
    st.just(Var()),
    st.floats(-1e3, 1e3, allow_nan=False).map(Num),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda a: Call(*a)),
    )


trees = st.recursive(_leaf, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees, st.floats(-3, 3))
def test_text_round_trip(e, t):
    back = parse_time_expr(to_text(e))
    assert to_text(back) == to_text(e)
    try:
        a = eval_time_expr(e, t)
    except ExprEvalError:
        with pytest.raises(ExprEvalError):
            eval_time_expr(back, t)
        return
    b = eval_time_expr(back, t)
    assert (a == b) or (math.isnan(a) and math.isnan(b))
