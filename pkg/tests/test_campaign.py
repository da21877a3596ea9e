from dataclasses import replace

import numpy as np
import pytest

from dmxci import campaign
from dmxci.analysis import asymptote, ls_slope
from dmxci.campaign import (
    SCALES, Scenario, ScenarioError, SegmentSpec, correlation_sets, matrix_scenarios, panel_id, run_many,
    run_scenario,
)
from dmxci.gnmodel import xci_incoherent_trace
from dmxci.ssfm import StepPolicy
from dmxci.txsignal import ChannelPlan

TINY = SegmentSpec(n1=2, n2=1, length_km=10.0)
FAST = StepPolicy(1.0)


def _tiny(mode="cumulative", **kw):
    return Scenario("tiny", TINY, mode=mode, n_symbols=1024, policy=FAST, **kw)


def test_catalog_counts():
    panels, extra = matrix_scenarios()
    assert len(panels) == 6 * 4
    kinds = {}
    for s in panels:
        kinds.setdefault(s.scenario_id, []).append(s.tag)
    assert len(kinds) == 6
    assert all(v == ["cumulative", "cumulative_ols2", "intrinsic", "ign"] for v in kinds.values())
    # periodic correlation runs at the other pump multiple for each D1 and D_RES
    assert len(extra) == 2 * 3 * 2
    assert {s.plan.pump_grid_multiple for s in extra} == {4}
    assert {s.tag for s in extra} == {"periodic", "periodic_intrinsic"}
    assert not matrix_scenarios(pump_multiples=(2,))[1]


def test_panel_grid():
    panels, _ = matrix_scenarios()
    grid = {(s.segment.d1, s.segment.d2, s.segment.d_res_ps_nm) for s in panels}
    assert grid == {(d1, d2, r) for d1, d2 in ((4.0, 16.0), (16.0, 4.0)) for r in (40.0, 80.0, 160.0)}
    ols2 = [s for s in panels if s.tag == "cumulative_ols2"]
    assert all(s.first_span == 11 and s.segment.n1 == 0 and s.segment.n2 == 20 for s in ols2)
    assert panel_id(4, 40) == "rs32_p2_d4_res40_l80"


def test_desk_scale_changes_numerics_only():
    desk, desk_x = matrix_scenarios("desk")
    full, full_x = matrix_scenarios("full")
    key = lambda s: (s.scenario_id, s.tag, s.segment, s.plan, s.seed, s.first_span, s.mode)
    assert [key(s) for s in desk + desk_x] == [key(s) for s in full + full_x]
    assert {s.n_symbols for s in desk} == {SCALES["desk"]["n_symbols"]}
    assert {s.n_symbols for s in full} == {SCALES["full"]["n_symbols"]}
    assert {s.policy.step_km for s in desk} == {SCALES["desk"]["step_km"]}


def test_invalid_mode_and_counts():
    with pytest.raises(ValueError):
        Scenario("x", TINY, mode="intrinsic-3")
    with pytest.raises(ValueError):
        SegmentSpec(n1=-1)


def test_ign_delegates_exactly():
    s = Scenario("ign", SegmentSpec(), mode="ign")
    t = run_scenario(s)
    assert np.array_equal(t.delta_p_w, xci_incoherent_trace(SegmentSpec().build(), ChannelPlan()))
    assert t.span_index.tolist() == list(range(1, 31))


def test_all_false_mask_sits_at_floor():
    t = run_scenario(_tiny(mask=(False, False, False)))
    assert np.all(t.snr_xci_db >= 40.0)
    assert np.allclose(t.snr_xci_db, t.floor_snr_db, atol=1e-9)


def test_kerr_on_raises_xci_above_floor():
    t = run_scenario(_tiny())
    assert np.all(t.snr_xci_db < t.floor_snr_db)
    assert np.all(np.diff(t.p_xci_w) > 0)


def test_run_is_deterministic():
    a = run_scenario(_tiny(mode="intrinsic"))
    b = run_scenario(_tiny(mode="intrinsic"))
    assert np.array_equal(a.p_xci_w, b.p_xci_w)
    c = run_scenario(_tiny(mode="intrinsic", seed=2))
    assert not np.array_equal(a.p_xci_w, c.p_xci_w)


@pytest.mark.filterwarnings("ignore:accumulated XCI power decreases")
def test_intrinsic_matches_masked_cumulative():
    # span 2 alone: one masked cumulative run reads the intrinsic value at tap 2
    intr = run_scenario(_tiny(mode="intrinsic", with_floor=False))
    masked = run_scenario(_tiny(mask=(False, True, False), with_floor=False))
    assert 10 * np.log10(masked.p_xci_w[1] / intr.delta_p_w[1]) == pytest.approx(0.0, abs=0.01)


@pytest.mark.filterwarnings("ignore:accumulated XCI power decreases")
def test_intrinsic_equal_for_identical_spans():
    # periodic line: XCI generated in span 3 or span 7 alone, both read at tap 7
    seg = SegmentSpec(n1=7, n2=0)
    base = Scenario("per", seg, n_symbols=2**13, policy=StepPolicy(0.1, precision="single"), with_floor=False)
    p = []
    for on in (3, 7):
        mask = tuple(k == on for k in range(1, 8))
        p.append(run_scenario(replace(base, mask=mask)).p_xci_w[-1])
    assert abs(10 * np.log10(p[0] / p[1])) <= 0.5


def test_failure_isolation_keeps_partial(monkeypatch):
    real = campaign.measure_xci
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 2:
            raise FloatingPointError("synthetic overflow")
        return real(*a, **k)

    monkeypatch.setattr(campaign, "measure_xci", flaky)
    bad = _tiny(with_floor=False)
    good = Scenario("ok", TINY, mode="ign")
    traces, failures = run_many([bad, good], workers=1)
    assert [f["scenario_id"] for f in failures] == ["tiny"]
    assert "synthetic overflow" in failures[0]["error"]
    assert [(t.scenario_id, len(t)) for t in traces] == [("tiny", 1), ("ok", 3)]


def test_scenario_error_carries_partial(monkeypatch):
    monkeypatch.setattr(campaign, "measure_xci", lambda *a, **k: (_ for _ in ()).throw(ValueError("boom")))
    with pytest.raises(ScenarioError) as exc:
        run_scenario(_tiny(with_floor=False))
    assert exc.value.partial is None and "boom" in str(exc.value)


def test_run_many_order_and_env(monkeypatch):
    monkeypatch.setenv(campaign.WORKERS_ENV, "2")
    assert campaign._worker_count(None) == 2
    assert campaign._worker_count(3) == 3
    scs = [Scenario(f"s{k}", replace(TINY, d_res_ps_nm=r), mode="ign") for k, r in enumerate((40.0, 80.0))]
    traces, failures = run_many(scs)
    assert not failures and [t.scenario_id for t in traces] == ["s0", "s1"]


def test_correlation_sets_pairing():
    traces, _ = run_many([Scenario("a", TINY, mode="ign")])
    assert correlation_sets(traces) == []
    with pytest.raises(campaign.MissingTraceError):
        correlation_sets([replace(traces[0], mode="cumulative")], strict=True)


def _sets(res, d1, mult):
    sids = {panel_id(d1, r, mult): r for r in (40.0, 80.0, 160.0)}
    return {sids[cs.meta["scenario_id"]]: cs for cs in res.correlations if cs.meta["scenario_id"] in sids}


@pytest.mark.slow
@pytest.mark.parametrize("d1", [4.0, 16.0])
@pytest.mark.parametrize("d_res", [40.0, 80.0, 160.0])
def test_matrix_red_and_blue_share_ols2_asymptote(desk_matrix, d1, d_res):
    res, _ = desk_matrix
    sid = panel_id(d1, d_res)
    blue = res.trace(sid, "cumulative").window(11, 30)
    red = res.trace(sid, "cumulative_ols2")
    assert red.span_index.tolist() == list(range(11, 31))
    gap = asymptote(blue.delta_p_w)[0] - asymptote(red.delta_p_w)[0]
    assert abs(gap) <= 1.0


@pytest.mark.slow
@pytest.mark.parametrize("d1", [4.0, 16.0])
def test_matrix_intrinsic_independent_of_d_res(desk_matrix, d1):
    res, _ = desk_matrix
    for lo, hi in ((1, 10), (11, 30)):
        means = [np.mean(res.trace(panel_id(d1, r), "intrinsic").window(lo, hi).delta_p_w) for r in (40.0, 80.0, 160.0)]
        assert 10 * np.log10(max(means) / min(means)) <= 0.5


@pytest.mark.slow
def test_matrix_pooled_theta_correlation_negative(desk_matrix):
    res, _ = desk_matrix
    theta = np.concatenate([cs.theta_ratio for cs in res.correlations])
    c = np.concatenate([cs.c_lag for cs in res.correlations])
    assert len(res.correlations) >= 3
    assert np.corrcoef(theta, c)[0, 1] < 0


@pytest.mark.slow
def test_matrix_low_residual_coefficients(desk_matrix):
    res, _ = desk_matrix
    cs = _sets(res, 4.0, 2).get(40.0)
    assert cs is not None, "no correlation set for D1=4, D_RES=40"
    assert cs.c_lag[0] > 0
    assert ls_slope(cs.lags[:8], cs.c_lag[:8]) < 0
    neg = np.flatnonzero(cs.c_lag < 0)
    assert neg.size and np.all(cs.c_lag[neg[0]:] < 0)


@pytest.mark.slow
def test_matrix_scatter_rows(desk_matrix):
    res, out = desk_matrix
    assert not res.failures
    assert sum(len(cs) for cs in res.correlations) == 9 * len(res.correlations)
    lines = [ln for ln in (out / "scatter.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) - 1 == 9 * len(res.correlations)
