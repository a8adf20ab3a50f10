import math

import numpy as np
import pytest

from core.errors import Blowup, DimensionMismatch, DivByZero, InputError
from symbolic.diff import diff, gradient, jacobian
from symbolic.expr import (
    ONE,
    ZERO,
    Constant,
    Var,
    VarTable,
    compile_exprs,
    cos,
    evaluate,
    exp,
    free_indices,
    is_constant,
    power,
    simplify,
    sin,
    substitute,
    to_text,
)
from symbolic.parser import parse

VARS = VarTable(("x1", "x2", "x3", "x4", "x5"))
x1, x2, x3, x4, x5 = (Var(i) for i in range(5))


def test_simplify_folds_constants_and_neutral_elements():
    assert simplify(Constant(2.0) * Constant(3.0)) == Constant(6.0)
    assert simplify(x1 * ZERO) == ZERO
    assert simplify(ONE * x2) == x2
    assert simplify(x3 + ZERO) == x3
    assert simplify(ZERO - x4) == simplify(-x4)
    assert simplify(-(-x5)) == x5
    assert simplify(x1 ** 0) == ONE
    assert simplify(x1 ** 1) == x1


def test_simplify_keeps_division_by_constant_zero():
    e = simplify(x1 / Constant(0.0))
    with pytest.raises(DivByZero):
        evaluate(e, [1.0] * 5)


def test_evaluate_matches_python_math():
    e = x5 * exp(-x4) + sin(x1) * cos(x2) - x3 ** 3 / (1 + x4 ** 2)
    point = [0.3, -0.7, 1.1, 0.25, -2.0]
    expected = (
        -2.0 * math.exp(-0.25)
        + math.sin(0.3) * math.cos(-0.7)
        - 1.1 ** 3 / (1 + 0.25 ** 2)
    )
    assert evaluate(e, point) == pytest.approx(expected, abs=1e-14)


def test_evaluate_checks_point_length():
    with pytest.raises(DimensionMismatch):
        evaluate(x1, [0.0, 1.0], n_vars=5)


def test_negative_power_of_zero_is_division_by_zero():
    with pytest.raises(DivByZero):
        evaluate(x1 ** -2, [0.0] * 5)


def test_compiled_evaluator_agrees_with_tree_walk(rng):
    exprs = [x5 * exp(-x4), x1 * exp(-x4), x4 * exp(-x4), sin(x3) ** 2 + cos(x3) ** 2]
    compiled = compile_exprs(exprs, 5)
    for point in rng.uniform(-1, 1, size=(20, 5)):
        expected = [evaluate(e, point) for e in exprs]
        np.testing.assert_allclose(compiled(point), expected, rtol=0, atol=1e-14)


def test_compiled_evaluator_reports_division_and_overflow():
    with pytest.raises(DivByZero):
        compile_exprs([ONE / x1], 5)([0.0] * 5)
    with pytest.raises(Blowup):
        compile_exprs([exp(x1)], 5)([1e4, 0, 0, 0, 0])


def test_compile_handles_constant_and_empty_lists():
    assert compile_exprs([], 3)([1, 2, 3]).shape == (0,)
    np.testing.assert_array_equal(compile_exprs([Constant(2.5)], 3)([1, 2, 3]), [2.5])


def test_free_indices_and_constancy():
    e = x2 * exp(-x5) + 3
    assert free_indices(e) == frozenset({1, 4})
    assert is_constant(Constant(2.0) * Constant(4.0))
    assert not is_constant(e)


def test_derivatives_of_transverse_output():
    lam = x5 * exp(-x4)
    assert diff(lam, 0) == ZERO
    point = [0.1, 0.2, 0.3, 0.4, 0.5]
    d4 = evaluate(diff(lam, 3), point)
    d5 = evaluate(diff(lam, 4), point)
    assert d4 == pytest.approx(-0.5 * math.exp(-0.4), abs=1e-14)
    assert d5 == pytest.approx(math.exp(-0.4), abs=1e-14)


def test_gradient_and_jacobian_shapes():
    assert len(gradient(x1 * x2, 5)) == 5
    rows = jacobian((x1 * x2, sin(x3)), 5)
    assert len(rows) == 2 and all(len(r) == 5 for r in rows)
    assert evaluate(rows[1][2], [0, 0, 0.5, 0, 0]) == pytest.approx(math.cos(0.5))


def test_diff_rejects_out_of_range_index():
    with pytest.raises(DimensionMismatch):
        diff(x1, 7, n_vars=5)


def test_substitute_replaces_variables_and_simplifies():
    e = x1 * x2 + x3
    out = substitute(e, {0: Constant(0.0), 2: x4})
    assert out == x4


def test_printed_text_parses_back_to_same_values(rng):
    e = x5 * exp(-x4) - x1 ** 3 / (2 + cos(x2))
    text = to_text(e, VARS)
    again = parse(text, VARS)
    for point in rng.uniform(-1, 1, size=(10, 5)):
        assert evaluate(again, point) == pytest.approx(evaluate(e, point), abs=1e-14)


def test_negative_constants_print_parenthesized():
    assert to_text(Constant(-2.0), VARS) == "(-2.0)"
    assert parse(to_text(Constant(-2.0) * x1, VARS), VARS) is not None


@pytest.mark.parametrize("exponent", [0.5, 2.0, True])
def test_power_needs_an_integer_exponent(exponent):
    with pytest.raises(InputError):
        power(x1, exponent)
