import numpy as np
import pytest

from core.charts import ChartBuilder, aligned_basis
from core.config import default_config
from core.errors import NoConvergence, PreconditionError
from core.system_model import load_system
from tools.flows import FlowIntegrator
from tools.sampling import ball_samples, halton_ball

from tests.test_ltflpi import NON_INVOLUTIVE


def motivating_closed_form(s):
    lam, s0, s1, t1, t2 = s
    return np.array([-s1 * np.exp(s0), t1, t2, s0, lam * np.exp(s0)])


@pytest.fixture(scope="module")
def builder():
    return ChartBuilder(default_config())


@pytest.fixture(scope="module")
def motivating_chart(builder, motivating):
    return builder.build_frames(motivating.system, motivating.target)


@pytest.fixture(scope="module")
def motivating_result(builder, motivating, motivating_chart):
    return builder.extract_lambda(motivating.system, motivating.target, motivating_chart)


def test_frames_of_motivating_system(motivating_chart):
    chart = motivating_chart
    assert chart.mu == 2
    assert chart.r == 3
    assert chart.lambda_index == 0
    assert len(chart.v_fields) == 0
    np.testing.assert_allclose(chart.w_fields[0](np.zeros(5)), np.eye(5)[1], atol=1e-12)
    np.testing.assert_allclose(chart.w_fields[1](np.zeros(5)), np.eye(5)[2], atol=1e-12)


def test_g_flow_closed_form(builder, motivating):
    g = motivating.system.g
    x = np.array([0.1, -0.2, 0.3, 0.05, -0.07])
    for s in (-0.2, 0.05, 0.15):
        expected = [np.exp(s) * x[0], x[1], x[2], s + x[3], np.exp(s) * x[4]]
        np.testing.assert_allclose(builder.integrator.flow(g, x, s), expected, rtol=0, atol=1e-8)


def test_forward_map_matches_closed_form(builder, motivating_chart):
    for s in halton_ball(5, 12, 0.1):
        np.testing.assert_allclose(
            builder.forward_map(motivating_chart, s), motivating_closed_form(s), rtol=0, atol=1e-7
        )


def test_zero_parameters_give_base_point(builder, motivating_chart):
    np.testing.assert_array_equal(builder.forward_map(motivating_chart, np.zeros(5)), np.zeros(5))


def test_inverse_matches_closed_form(builder, motivating_chart):
    x = np.array([0.1, 0.3, -0.2, 0.05, 0.07])
    s = builder.invert_chart(motivating_chart, x)
    expected = [x[4] * np.exp(-x[3]), x[3], -x[0] * np.exp(-x[3]), x[1], x[2]]
    np.testing.assert_allclose(s, expected, rtol=0, atol=1e-7)
    np.testing.assert_allclose(builder.invert_chart(motivating_chart, np.zeros(5)), np.zeros(5), atol=1e-12)


def test_far_point_does_not_invert(builder, motivating_chart):
    far = np.full(5, 1e3 / np.sqrt(5))
    with pytest.raises(NoConvergence):
        builder.invert_chart(motivating_chart, far)


def test_extracted_output_matches_known_output(motivating_result):
    result = motivating_result
    assert result.verification.passed
    assert result.radius == pytest.approx(0.05)
    for x in ball_samples(np.zeros(5), 32, 0.05):
        assert result.lam(x) == pytest.approx(x[4] * np.exp(-x[3]), abs=1e-6)


def test_verification_numbers(motivating_result):
    v = motivating_result.verification
    assert v.roundtrip_x < 1e-7
    assert v.roundtrip_s < 1e-7
    assert v.transversal_max < 1e-5
    assert v.top_at_x0 > 1e-4
    assert v.on_set_max < 1e-7
    assert v.failures == []


def test_chart_serializes(motivating_result, motivating):
    d = motivating_result.to_dict(motivating.system.vars)
    kinds = [f["kind"] for f in d["chart"]["fields"]]
    assert kinds == ["symbolic", "symbolic", "symbolic", "projected", "projected"]
    assert d["chart"]["fields"][0]["role"] == "ad^2_f g"
    assert d["verification"]["passed"]


def test_frozen_mode_on_motivating_system(motivating):
    config = default_config()
    config["charts"]["frame_mode"] = "frozen"
    config["charts"]["verify_samples"] = 8
    builder = ChartBuilder(config)
    result = builder.extract_lambda(motivating.system, motivating.target)
    assert result.chart.frame_mode == "frozen"
    x = np.array([0.01, -0.02, 0.03, 0.02, -0.01])
    assert result.lam(x) == pytest.approx(x[4] * np.exp(-x[3]), abs=1e-6)


def test_unicycle_output_is_verified(unicycle):
    config = default_config()
    config["charts"]["verify_samples"] = 8
    config["charts"]["roundtrip_samples"] = 4
    builder = ChartBuilder(config)
    chart = builder.build_frames(unicycle.system, unicycle.target)
    assert chart.mu == 2
    assert len(chart.v_fields) == 1
    assert chart.lambda_index == 1
    result = builder.extract_lambda(unicycle.system, unicycle.target, chart)
    v = result.verification
    assert v.passed
    assert v.transversal_max < 1e-5
    assert v.top_at_x0 > 1e-4
    assert v.on_set_max < 1e-7


def test_unsolvable_system_is_refused(builder):
    sf = load_system(NON_INVOLUTIVE)
    with pytest.raises(PreconditionError):
        builder.build_frames(sf.system, sf.target)


def test_unknown_frame_mode_is_rejected():
    config = default_config()
    config["charts"]["frame_mode"] = "rotating"
    with pytest.raises(PreconditionError):
        ChartBuilder(config)


def test_flow_group_law(unicycle):
    integrator = FlowIntegrator(default_config())
    f = unicycle.system.f
    x = np.array([0.9, 0.1, 1.2, 0.3, -0.2])
    for s, t in [(0.2, -0.1), (-0.15, 0.2), (0.1, 0.1)]:
        composed = integrator.flow(f, integrator.flow(f, x, s), t)
        np.testing.assert_allclose(composed, integrator.flow(f, x, s + t), rtol=0, atol=1e-8)


def test_aligned_basis_recovers_coordinate_axes():
    rotated = np.array([[0, 1, 1, 0, 0], [0, 1, -1, 0, 0]]) / np.sqrt(2)
    basis = aligned_basis(rotated)
    np.testing.assert_allclose(basis, np.eye(5)[[1, 2]], atol=1e-12)
