import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmxci.analysis import (
    CorrelationSet, NonPeriodicError, XciTrace, asymptote, correlation_set, extract_c_lags, gradient, ls_slope,
    scatter_points, synthesize_delta_p, theta_eff, theta_span, to_dbm,
)
from dmxci.gnmodel import xci_incoherent_trace
from dmxci.topology import SpanParams, periodic_ols, segment_from_stages, two_ols_segment
from dmxci.txsignal import ChannelPlan

RS = 32e9


def _periodic(n=10, d_res=40.0, d=4.0):
    return segment_from_stages(periodic_ols("OLS1", n, SpanParams(80, 0.2, d), d_res).stages)


def test_gradient_examples():
    assert np.allclose(gradient([1e-3, 2e-3, 3e-3]), [1e-3, 1e-3, 1e-3], rtol=0, atol=1e-18)
    assert gradient([5e-6]).tolist() == [5e-6]


def test_gradient_warns_on_decrease():
    with pytest.warns(RuntimeWarning):
        d = gradient([2.0, 1.0, 3.0])
    assert d.tolist() == [2.0, -1.0, 2.0]


def test_gradient_of_ign_trace_is_constant():
    per_span = xci_incoherent_trace(two_ols_segment(4, 4, 40, n1=10, n2=0), ChannelPlan())
    d = gradient(np.cumsum(per_span))
    assert np.allclose(d, d[0], rtol=1e-12)


def test_to_dbm():
    assert to_dbm(1e-3) == pytest.approx(0.0)
    assert to_dbm(0.0) == -np.inf


def test_trace_from_increments_round_trip():
    t = XciTrace.from_increments("s", "ign", [1, 2, 3], [1e-9, 2e-9, 3e-9], 1e-5)
    assert np.allclose(t.p_xci_w, [1e-9, 3e-9, 6e-9])
    assert np.allclose(t.delta_p_w, [1e-9, 2e-9, 3e-9])
    assert t.snr_xci_db[0] == pytest.approx(40.0)
    w = t.window(2, 3)
    assert w.span_index.tolist() == [2, 3] and np.allclose(w.delta_p_w, [2e-9, 3e-9])


def test_extract_c_lags_example():
    c = extract_c_lags([1.0, 1.5, 1.8], 1.0)
    assert c == pytest.approx([0.25, 0.15], abs=1e-15)


def test_extract_c_lags_incoherent_limit():
    assert np.all(extract_c_lags(np.full(6, 2.5), 2.5) == 0)


@given(st.lists(st.floats(-0.3, 0.3), min_size=1, max_size=19), st.floats(1e-9, 1e-3))
@settings(max_examples=50, deadline=None)
def test_forward_backward_round_trip(c, s2):
    d = synthesize_delta_p(s2, c)
    assert np.max(np.abs(extract_c_lags(d, s2) - np.asarray(c))) < 1e-12


def test_extract_rejects_zero_and_non_periodic():
    with pytest.raises(ValueError):
        extract_c_lags([1.0, 2.0], [0.0, 1.0])
    with pytest.raises(NonPeriodicError):
        extract_c_lags([1.0, 2.0, 3.0], [1.0, 1.0, 1.2])
    # within the 0.5 dB band the mean is used
    assert extract_c_lags([1.0, 1.1], [1.0, 1.1]) == pytest.approx([0.1 / 2.1])


def test_theta_span_examples():
    seg = _periodic()
    lag1 = theta_span(seg, 2, 1, RS)
    assert lag1 == pytest.approx(0.163, abs=5e-4)
    assert theta_span(seg, 3, 1, RS) == pytest.approx(2 * lag1, rel=1e-12)
    assert theta_span(seg, 7, 7, RS) == 0.0
    with pytest.raises(ValueError):
        theta_span(seg, 1, 2, RS)
    with pytest.raises(ValueError):
        theta_span(seg, 11, 1, RS)


def test_theta_span_uses_local_residuals():
    seg = two_ols_segment(4, 16, 40)
    # spans 10..11 mix OLS1 and OLS2 stages, each leaving 40 ps/nm
    assert theta_span(seg, 12, 10, RS) == pytest.approx(2 * theta_span(seg, 2, 1, RS), rel=1e-12)


def test_theta_eff_examples():
    span = SpanParams(80, 0.2, 16)
    base = theta_eff(span, RS)
    assert base == pytest.approx(1.38, abs=0.01)
    assert theta_eff(span, 2 * RS) == pytest.approx(4 * base, rel=1e-12)
    lossless = theta_eff(SpanParams(80, 0.0, 16), RS)
    assert lossless / base == pytest.approx(80 / (-np.expm1(-span.alpha_per_km * 80) / span.alpha_per_km), rel=1e-12)


def _traces(c, s2=1e-9, n=10):
    d = synthesize_delta_p(s2, c)
    idx = np.arange(1, n + 1)
    cum = XciTrace.from_increments("p", "cumulative", idx, d, 1e-5)
    intr = XciTrace.from_increments("p", "intrinsic", idx, np.full(n, s2), 1e-5)
    return cum, intr


def test_correlation_set_recovers_coefficients():
    c = np.linspace(0.2, -0.1, 9)
    cum, intr = _traces(c)
    cs = correlation_set(cum, intr, _periodic(), RS)
    assert cs.lags.tolist() == list(range(1, 10))
    assert np.max(np.abs(cs.c_lag - c)) < 1e-12
    assert np.all(cs.theta_ratio > 0)
    pts = scatter_points(cs)
    assert len(pts) == 9
    assert pts[0][2]["d_res_ps_nm"] == 40.0 and pts[0][2]["lag"] == 1


def test_scatter_scales_with_d_res():
    cum, intr = _traces(np.zeros(9))
    a = scatter_points(correlation_set(cum, intr, _periodic(d_res=40), RS))
    b = scatter_points(correlation_set(cum, intr, _periodic(d_res=80), RS))
    assert [q[0] for q in b] == pytest.approx([2 * p[0] for p in a], rel=1e-12)


def test_scatter_empty():
    assert scatter_points(None) == []
    empty = CorrelationSet(np.empty(0), np.empty(0), np.empty(0), np.empty(0))
    assert scatter_points(empty) == []


def test_correlation_set_rejects_mixed_segment():
    cum, intr = _traces(np.zeros(9))
    with pytest.raises(NonPeriodicError):
        correlation_set(cum, intr, two_ols_segment(4, 16, 40, n1=5, n2=5), RS)
    with pytest.raises(ValueError):
        correlation_set(cum, intr.window(1, 9), _periodic(), RS)


def test_asymptote_constant_and_ign():
    assert asymptote(np.full(8, 1e-6)) == (pytest.approx(-30.0), 1)
    per_span = xci_incoherent_trace(two_ols_segment(4, 4, 40, n1=10, n2=0), ChannelPlan())
    level, settle = asymptote(per_span)
    assert settle == 1 and level == pytest.approx(float(to_dbm(per_span[0])), abs=1e-9)


def test_asymptote_settling_and_never():
    d = 1e-3 * 10 ** (np.array([3.0, 1.0, 0.2, 0.1, 0.0, 0.0, 0.0]) / 10)
    level, settle = asymptote(d)
    assert settle == 3
    alternating = 1e-3 * 10 ** (np.array([0.0, 3.0] * 4) / 10)
    assert asymptote(alternating, tail_window=3)[1] is None
    with pytest.raises(ValueError):
        asymptote([1.0, 2.0], tail_window=3)


def test_ls_slope():
    assert ls_slope([1, 2, 3], [3, 1, -1]) == pytest.approx(-2.0)


def test_no_warning_for_monotone_trace():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        gradient([1.0, 1.0, 2.0])
