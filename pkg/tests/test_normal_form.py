import numpy as np
import pytest

from core.charts import ChartBuilder
from core.config import default_config
from core.errors import NotSymbolic, PreconditionError
from core.ltflpi import LtflpiChecker
from core.normal_form import normal_form
from core.system_model import parse_output_function
from symbolic.expr import is_zero, simplify
from tools.sampling import ball_samples

POINTS = ball_samples(np.zeros(5), 12, 0.5)


@pytest.fixture
def checker(config):
    return LtflpiChecker(config)


@pytest.fixture
def motivating_form(motivating, checker):
    lam = parse_output_function("y2*exp(-y1)", motivating.system)
    return normal_form(lam, motivating.system, motivating.target, checker)


def test_motivating_chain(motivating_form):
    nf = motivating_form
    assert nf.r == 3
    for x in POINTS:
        e = np.exp(-x[3])
        np.testing.assert_allclose(nf.transverse(x), [x[4] * e, x[0] * e, x[3] * e], atol=1e-12)
        a1, a2 = nf.coefficients(x)
        assert a1 == pytest.approx(0.0, abs=1e-12)
        assert a2 == pytest.approx((1.0 - x[3]) * e, abs=1e-12)


def test_motivating_drift_vanishes_symbolically(motivating_form):
    assert is_zero(simplify(motivating_form.a1))
    assert motivating_form.coefficients(np.zeros(5))[1] == pytest.approx(1.0)


def test_unicycle_chain(unicycle, checker):
    sys, tset = unicycle.system, unicycle.target
    lam = parse_output_function("y1^2 + y2^2 - 1", sys)
    nf = normal_form(lam, sys, tset, checker)
    assert nf.r == 2
    x0 = tset.x0
    for x in ball_samples(x0, 8, 0.3):
        x1, x2, x3, w1 = x[0], x[1], x[2], x[3]
        xi2 = 2 * x1 * np.cos(x3) + 2 * x2 * (np.sin(x3) + w1)
        a2 = 2 * (-x1 * np.sin(x3) + x2 * np.cos(x3))
        np.testing.assert_allclose(nf.transverse(x), [x1**2 + x2**2 - 1, xi2], atol=1e-12)
        assert nf.coefficients(x)[1] == pytest.approx(a2, abs=1e-12)


def test_wrong_relative_degree_is_refused(motivating, checker):
    lam = parse_output_function("x1", motivating.system)
    with pytest.raises(PreconditionError):
        normal_form(lam, motivating.system, motivating.target, checker)


def test_numeric_output_is_refused(motivating, checker):
    with pytest.raises(NotSymbolic):
        normal_form(lambda x: x[4], motivating.system, motivating.target, checker)


def test_feedback_cancels_drift(motivating_form, motivating):
    sys = motivating.system
    x = np.array([0.1, -0.2, 0.05, 0.2, 0.1])
    v = 0.7
    u = motivating_form.feedback(x, v)
    # d/dt xi_3 = L_f xi_3 + u L_g xi_3 must equal v
    a1, a2 = motivating_form.coefficients(x)
    assert a1 + a2 * u == pytest.approx(v)


def test_feedback_refuses_vanishing_gain(motivating_form):
    x = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
    with pytest.raises(PreconditionError):
        motivating_form.feedback(x, 1.0)


def test_serialized_form(motivating_form, motivating):
    d = motivating_form.to_dict(motivating.system.vars)
    assert d["r"] == 3
    assert len(d["xi"]) == 3
    assert d["eta"] == {"chart_coordinates": []}


def test_chart_supplies_eta_coordinates(motivating):
    config = default_config()
    config["charts"]["verify_samples"] = 8
    checker = LtflpiChecker(config)
    result = ChartBuilder(config, checker).extract_lambda(motivating.system, motivating.target)
    lam = parse_output_function("y2*exp(-y1)", motivating.system)
    nf = normal_form(lam, motivating.system, motivating.target, checker, chart=result)
    assert nf.eta_coordinates == (3, 4)
    check = nf.tangential_check
    assert check.coordinates == [3, 4]
    assert check.annihilated
