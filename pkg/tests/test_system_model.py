import numpy as np
import pytest

from core.errors import DimensionMismatch, FormatError, NotOnSet, UnknownVariable
from core.system_model import (
    SystemValidator,
    TargetSet,
    augment_with_exosystem,
    invariance_check,
    load_system,
    project_to_set,
    set_samples,
    tangent_space,
)
from geometry.lie import VectorField
from symbolic.expr import ZERO, Constant, Var, VarTable, cos, evaluate, sin

MINIMAL = """
[vars] a b
[f]
b
0
[g]
0
1
[h]
a
[gamma]
a
[nstar] 1
[x0] 0 0
"""

TANGENT_INPUT = """
[vars] a b c
[f]
c*a
-b
a
[g]
0
1
0
[h]
b
[gamma]
a
[nstar] 2
[x0] 0 0 0
"""


def test_motivating_file_loads(motivating):
    sys, tset = motivating.system, motivating.target
    assert (sys.n, sys.p, tset.nstar) == (5, 2, 2)
    assert tuple(sys.vars) == ("x1", "x2", "x3", "x4", "x5")
    assert motivating.observer["alpha"] == "6 11 6"
    assert motivating.controller["t"] == "20"


def test_lambda_written_over_outputs_becomes_state_expression(motivating):
    lam = motivating.output_function()
    point = [0.1, 0.2, 0.3, 0.4, 0.5]
    assert evaluate(lam, point) == pytest.approx(0.5 * np.exp(-0.4))


def test_minimal_file_and_comments():
    sf = load_system("# leading comment\n" + MINIMAL.replace("[f]", "[f]   # drift"))
    assert sf.system.n == 2
    assert sf.lambda_text is None


@pytest.mark.parametrize(
    "text, line",
    [
        (MINIMAL + "[bogus]\n", 15),
        (MINIMAL + "[vars] c\n", 15),
        ("b\n" + MINIMAL, 1),
        (MINIMAL.replace("[nstar] 1", "[nstar] 1.5"), 13),
        (MINIMAL + "[observer]\neps 0.1\n", 16),
    ],
)
def test_format_errors_report_line(text, line):
    with pytest.raises(FormatError) as err:
        load_system(text)
    assert err.value.line == line


def test_missing_section():
    with pytest.raises(FormatError):
        load_system(MINIMAL.replace("[x0] 0 0", ""))


def test_dimension_mismatches():
    with pytest.raises(DimensionMismatch):
        load_system(MINIMAL.replace("[x0] 0 0", "[x0] 0 0 0"))
    with pytest.raises(DimensionMismatch):
        load_system(MINIMAL.replace("[nstar] 1", "[nstar] 0"))


def test_unknown_variable_in_section():
    with pytest.raises(UnknownVariable):
        load_system(MINIMAL.replace("[h]\na", "[h]\nq"))


def test_target_set_validates_row_count():
    with pytest.raises(DimensionMismatch):
        TargetSet((Var(0),), 2, np.zeros(4))


def test_tangent_space_of_motivating_set(motivating):
    frame = tangent_space(motivating.target, np.zeros(5))
    assert frame.rank == 2
    for k in (1, 2):
        assert frame.contains(np.eye(5)[k]) < 1e-12
    dgamma = motivating.target.constraint_jacobian(np.zeros(5))
    assert np.max(np.abs(dgamma @ frame.vectors.T)) < 1e-8


def test_tangent_space_off_the_set(motivating):
    with pytest.raises(NotOnSet):
        tangent_space(motivating.target, np.array([0.1, 0, 0, 0, 0]))


def test_projection_and_samples_stay_on_unicycle_set(unicycle):
    tset = unicycle.target
    x = project_to_set(tset, tset.x0 + np.array([0.01, 0.02, -0.01, 0.03, 0.0]))
    assert tset.residual(x) <= 1e-10
    samples = set_samples(tset, 16, 0.05)
    assert len(samples) == 16
    np.testing.assert_allclose(samples[0], tset.x0)
    assert max(tset.residual(s) for s in samples) <= 1e-10


def test_invariance_check_with_feedback(motivating):
    sys, tset = motivating.system, motivating.target
    samples = set_samples(tset, 8, 0.05)
    assert invariance_check(sys.f, tset, samples) < 1e-12
    assert invariance_check(VectorField.zero(5), tset, samples) == 0.0
    # D gamma_2 . g = 1 on the set, so g itself and any nonzero feedback leave it
    assert invariance_check(sys.g, tset, samples) > 0.5
    x2 = Var(1)
    closed = sys.with_feedback(Constant(1.0) + x2 * x2)
    assert invariance_check(closed.f, tset, samples) >= 1.0 - 1e-12


def test_invariance_survives_feedback_along_the_set():
    sf = load_system(TANGENT_INPUT)
    sys, tset = sf.system, sf.target
    samples = set_samples(tset, 8, 0.5)
    assert invariance_check(sys.g, tset, samples) == 0.0
    b, c = Var(1), Var(2)
    closed = sys.with_feedback(sin(b) + c * c + Constant(3.0))
    assert max(abs(closed.f(x)[1] - sys.f(x)[1]) for x in samples[1:]) > 0.1
    assert invariance_check(closed.f, tset, samples) < 1e-12


def test_validator_accepts_both_fixtures(motivating, unicycle, config):
    validator = SystemValidator(config)
    for sf in (motivating, unicycle):
        report = validator.validate(sf.system, sf.target)
        assert report.dh_rank_pass and report.base_point_pass
        assert report.regular_value_pass
        assert report.controlled_invariance_pass
        assert report.passed


def test_validator_flags_base_point_off_set(motivating, config):
    tset = TargetSet(motivating.target.gamma, 2, np.array([0.0, 0, 0, 0.5, 0]))
    report = SystemValidator(config).validate(motivating.system, tset)
    assert not report.base_point_pass
    assert not report.passed


def test_exosystem_augmentation_reproduces_unicycle(unicycle, rng):
    names = VarTable(("x1", "x2", "x3", "w1", "w2"))
    x3, w1, w2 = Var(2), Var(3), Var(4)
    sys = augment_with_exosystem(
        names, (cos(x3), sin(x3) + w1, ZERO), (ZERO, ZERO, Constant(1.0)), (w2, -w1), 3
    )
    assert sys.p == 3
    for point in rng.uniform(-1, 1, size=(10, 5)):
        np.testing.assert_allclose(sys.f(point), unicycle.system.f(point), atol=1e-14)
        np.testing.assert_allclose(sys.g(point), unicycle.system.g(point), atol=1e-14)
        np.testing.assert_allclose(sys.output(point), unicycle.system.output(point), atol=1e-14)


DUPLICATED_GAMMA = """
[vars] a b c
[f]
b
c
0
[g]
0
0
1
[h]
a
[gamma]
a
a
[nstar] 1
[x0] 0 0 0
"""


def test_validator_rejects_duplicated_gamma_row(config):
    sf = load_system(DUPLICATED_GAMMA)
    report = SystemValidator(config).validate(sf.system, sf.target)
    assert report.regular_value_ratios[0] < 1e-12
    assert not report.regular_value_pass
    assert not report.passed


@pytest.mark.parametrize("fixture", ["motivating", "unicycle"])
def test_projection_is_idempotent(request, fixture):
    tset = request.getfixturevalue(fixture).target
    for offset in (0.02, -0.05, 0.1):
        x = project_to_set(tset, tset.x0 + offset * np.arange(1, tset.n + 1) / tset.n)
        np.testing.assert_allclose(project_to_set(tset, x), x, rtol=0.0, atol=1e-10)
