import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmxci.topology import (
    CUT_FREQUENCY_HZ, DcuParams, SpanParams, SpanStage, beta2_from_dispersion, dcu_for_residual,
    dispersion_from_beta2, dispersion_map, effective_length, periodic_ols, segment_from_stages,
    transparency_gain, two_ols_segment,
)


@pytest.mark.parametrize(
    "d, d_res, expected",
    [(4, 40, -280), (16, 40, -1240), (16, 1280, 0)],
)
def test_dcu_for_residual(d, d_res, expected):
    dcu = dcu_for_residual(SpanParams(80, 0.2, d), d_res)
    assert dcu.dcu_dispersion_ps_nm == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("d, expected", [(16, -20.31), (4, -5.08), (0, 0.0)])
def test_beta2_values(d, expected):
    assert beta2_from_dispersion(d, CUT_FREQUENCY_HZ) == pytest.approx(expected, abs=0.01)


@given(st.floats(-30, 30, allow_nan=False))
def test_beta2_round_trip(d):
    back = dispersion_from_beta2(beta2_from_dispersion(d))
    assert back == pytest.approx(d, rel=1e-12, abs=1e-15)


def test_beta2_linear():
    assert beta2_from_dispersion(8.0) == pytest.approx(2 * beta2_from_dispersion(4.0), rel=1e-14)


@pytest.mark.parametrize("length, expected", [(80, 21.17), (50, 19.54)])
def test_effective_length(length, expected):
    assert effective_length(SpanParams(length, 0.2)) == pytest.approx(expected, abs=0.01)


def test_effective_length_lossless():
    assert effective_length(SpanParams(80, 0.0)) == 80.0
    assert effective_length(SpanParams(80, 1e-9)) == pytest.approx(80.0, rel=1e-6)


@given(st.floats(1, 200), st.floats(1, 200), st.floats(0.01, 1.0))
def test_effective_length_monotone_and_bounded(l1, l2, loss):
    a, b = sorted((l1, l2))
    la, lb = effective_length(SpanParams(a, loss)), effective_length(SpanParams(b, loss))
    assert la <= lb + 1e-12
    alpha_lin = loss * np.log(10) / 10
    assert lb <= min(b, 1 / alpha_lin) + 1e-9


@pytest.mark.parametrize("loss, length, gain", [(0.2, 80, 16), (0.2, 50, 10), (0.0, 80, 0)])
def test_transparency_gain(loss, length, gain):
    assert transparency_gain(SpanParams(length, loss)) == pytest.approx(gain, abs=1e-12)


def test_transparent_stage_gain_is_exact():
    st_ = SpanStage.transparent(SpanParams(80, 0.2))
    assert st_.edfa_gain_db == 0.2 * 80
    assert st_.net_gain_db == pytest.approx(0.0, abs=1e-12)


def test_dispersion_map_periodic_floors():
    seg = segment_from_stages(periodic_ols("OLS1", 10, SpanParams(80, 0.2, 4.0), 40).stages)
    dm = dispersion_map(seg)
    assert np.allclose(dm.post_dcu_ps_nm, 40 * np.arange(1, 11), atol=1e-9)


def test_dispersion_map_single_stage():
    stage = SpanStage(SpanParams(80, 0.2, 16), 16.0, DcuParams(-1240))
    dm = dispersion_map(segment_from_stages([stage]))
    assert dm.pre_dcu_ps_nm.tolist() == [1280.0]
    assert dm.post_dcu_ps_nm.tolist() == [40.0]


def test_dispersion_map_uncompensated():
    seg = segment_from_stages(periodic_ols("OLS1", 3, SpanParams(80, 0.2, 16), None).stages)
    dm = dispersion_map(seg)
    assert dm.pre_dcu_ps_nm.tolist() == [1280.0, 2560.0, 3840.0]
    assert np.array_equal(dm.post_dcu_ps_nm, dm.pre_dcu_ps_nm)


@given(
    st.lists(st.floats(-2000, 2000, allow_nan=False), min_size=1, max_size=12),
    st.sampled_from([4.0, 16.0]),
)
def test_post_dcu_equals_sum_of_residuals(residuals, d):
    span = SpanParams(80, 0.2, d)
    stages = [SpanStage.transparent(span, dcu_for_residual(span, r)) for r in residuals]
    dm = dispersion_map(segment_from_stages(stages))
    assert np.allclose(dm.post_dcu_ps_nm, np.cumsum(residuals), rtol=0, atol=1e-9)


def test_two_ols_segment_layout():
    seg = two_ols_segment(4, 16, 40)
    assert seg.n_spans == 30
    assert [o.name for o in seg.ols] == ["OLS1", "OLS2"]
    assert seg.ols_boundaries() == [1, 11]
    assert not seg.is_periodic()
    assert seg.sub_segment(1, 10).is_periodic()
    assert seg.stages[10].span.dispersion_ps_nm_km == 16


def test_span_validation():
    with pytest.raises(ValueError):
        SpanParams(0.0)
    with pytest.raises(ValueError):
        SpanParams(80, -0.1)
    with pytest.raises(ValueError):
        SpanParams(80, 0.2, 16, -1.0)
    SpanParams(80, 0.2, -17.0)
