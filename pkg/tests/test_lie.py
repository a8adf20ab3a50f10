import numpy as np
import pytest

from core.errors import RankDrop
from core.system_model import ControlSystem
from geometry.lie import (
    Distribution,
    VectorField,
    ad_iterates,
    bracket_residual,
    build_G,
    involutive_closure,
    lie_bracket,
    lie_derivative,
    output_kernel_W,
    output_kernel_generators,
)
from symbolic.expr import ZERO, Constant, Var, VarTable, evaluate, exp, sin

x1, x2, x3, x4, x5 = (Var(i) for i in range(5))


def _field_values(vf, point):
    return np.array([evaluate(c, point) for c in vf.components])


def test_motivating_iterates_match_closed_forms(motivating, rng):
    sys = motivating.system
    g, ad1, ad2 = ad_iterates(sys.f, sys.g, 2)
    assert g is sys.g
    for point in rng.uniform(-1, 1, size=(100, 5)):
        np.testing.assert_allclose(ad1(point), [point[3] - 1, 0, 0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(ad2(point), [0, 0, 0, 0, 1 - point[3]], atol=1e-12)


def test_bracket_of_g_with_first_iterate(motivating, rng):
    sys = motivating.system
    g, ad1 = ad_iterates(sys.f, sys.g, 1)
    bracket = lie_bracket(g, ad1)
    for point in rng.uniform(-1, 1, size=(20, 5)):
        np.testing.assert_allclose(bracket(point), [2 - point[3], 0, 0, 0, 0], atol=1e-12)


def test_unicycle_iterates(unicycle, rng):
    sys = unicycle.system
    g, ad1 = ad_iterates(sys.f, sys.g, 1)
    bracket = lie_bracket(g, ad1)
    for point in rng.uniform(-1, 1, size=(20, 5)):
        c, s = np.cos(point[2]), np.sin(point[2])
        np.testing.assert_allclose(ad1(point), [s, -c, 0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(bracket(point), [c, s, 0, 0, 0], atol=1e-12)


def test_lie_derivative_skips_zero_components():
    v = VectorField((ZERO, ZERO, ZERO, Constant(1.0), ZERO))
    lam = x5 * exp(-x4)
    d = lie_derivative(lam, v)
    assert evaluate(d, [0, 0, 0, 0.2, 1.0]) == pytest.approx(-np.exp(-0.2))
    assert lie_derivative(x1, v) == ZERO


def test_constant_fields_expose_their_vector():
    v = VectorField.constant([0, 1, 0])
    np.testing.assert_array_equal(v.constant_vector, [0, 1, 0])
    assert VectorField((x1, ZERO)).constant_vector is None
    assert VectorField.zero(3).is_zero()


def test_build_G_dimensions(motivating):
    sys = motivating.system
    assert len(build_G(sys, -1)) == 0
    assert len(build_G(sys, 2)) == 3
    assert build_G(sys, 1).frame(np.zeros(5)).rank == 2
    with pytest.raises(ValueError):
        build_G(sys, -2)


def test_output_kernel_for_coordinate_outputs(motivating):
    sys = motivating.system
    kernel = output_kernel_generators(sys)
    assert kernel.method == "identity-block"
    frame = kernel.distribution.frame(np.zeros(5))
    assert frame.rank == 3
    for k in (0, 1, 2):
        assert frame.contains(np.eye(5)[k]) < 1e-12


def test_output_kernel_frozen_fallback():
    vars = VarTable(("a", "b"))
    a, b = Var(0), Var(1)
    sys = ControlSystem(vars, VectorField((ZERO, ZERO)), VectorField((Constant(1.0), ZERO)), (a * b + a,))
    kernel = output_kernel_generators(sys)
    assert kernel.method == "frozen"
    vectors = kernel.distribution.vectors(np.array([0.0, 0.0]))
    assert vectors.shape == (1, 2)
    assert abs(vectors[0] @ np.array([1.0, 0.0])) < 1e-12


def test_output_kernel_identity_block_with_nonlinear_entries():
    vars = VarTable(("a", "b"))
    a, b = Var(0), Var(1)
    sys = ControlSystem(vars, VectorField((ZERO, ZERO)), VectorField((Constant(1.0), ZERO)), (a + sin(b),))
    kernel = output_kernel_generators(sys)
    assert kernel.method == "identity-block"
    point = np.array([0.0, 0.4])
    w = kernel.distribution.vectors(point)[0]
    assert abs(w @ np.array([1.0, np.cos(0.4)])) < 1e-12


def test_output_kernel_rank_drop():
    vars = VarTable(("a", "b"))
    a = Var(0)
    sys = ControlSystem(vars, VectorField((ZERO, ZERO)), VectorField((Constant(1.0), ZERO)), (a * a,))
    with pytest.raises(RankDrop):
        output_kernel_W(sys, np.zeros(2))


def test_closure_adjoins_raising_bracket_only():
    # span{e1, (0, 1, x1, 0)} is not involutive: the bracket is e3
    n = 4
    d1 = VectorField((Constant(1.0), ZERO, ZERO, ZERO))
    d2 = VectorField((ZERO, Constant(1.0), x1, ZERO))
    D = Distribution(n, (d1, d2), label="D")
    points = [np.zeros(n), np.array([0.1, -0.2, 0.3, 0.05])]
    closed, report = involutive_closure(D, None, points)
    assert report.final_ranks == [3, 3]
    assert report.added_brackets == ["[0,1]"]
    assert report.converged and report.regular
    assert bracket_residual(closed, points) < 1e-6
    assert bracket_residual(D, points) > 0.5


def test_closure_of_motivating_system_adds_nothing(motivating):
    sys = motivating.system
    kernel = output_kernel_generators(sys)
    _, report = involutive_closure(build_G(sys, 1), kernel.distribution, [np.zeros(5)])
    assert report.final_ranks == [4]
    assert report.added_brackets == []


def test_closure_needs_samples():
    with pytest.raises(ValueError):
        involutive_closure(Distribution(2, (VectorField.constant([1, 0]),)), None, [])
