"""Scenario catalog and orchestration of the pump-and-probe campaign.

Modes
-----
cumulative
    one propagation with the Kerr term on in every span, receiver at each tap
intrinsic
    one propagation per span with the Kerr term on in that span only
ign
    incoherent GN-model trace
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .analysis import CorrelationSet, XciTrace, correlation_set
from .gnmodel import GnGrid, xci_incoherent_trace
from .rxdsp import RxConfig, measure_xci
from .ssfm import StepPolicy, run_link
from .topology import LinkSegment, two_ols_segment
from .txsignal import ChannelPlan, build_wdm, dbm_to_w

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODES = ("cumulative", "intrinsic", "ign")
SCALES = {
    "desk": {"n_symbols": 2**13, "step_km": 0.1, "precision": "single"},
    "full": {"n_symbols": 2**16, "step_km": 0.05, "precision": "double"},
}
WORKERS_ENV = "DMXCI_WORKERS"

MATRIX_D_PAIRS = ((4.0, 16.0), (16.0, 4.0))
MATRIX_D_RES = (40.0, 80.0, 160.0)


@dataclass(frozen=True)
class SegmentSpec:
    """Two-OLS segment: ``n1`` spans of ``d1`` then ``n2`` spans of ``d2``."""

    d1: float = 4.0
    d2: float = 16.0
    d_res_ps_nm: float | None = 40.0
    length_km: float = 80.0
    n1: int = 10
    n2: int = 20
    loss_db_per_km: float = 0.2
    gamma_per_w_km: float = 1.27

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError("span counts must be non-negative")

    def build(self) -> LinkSegment:
        return two_ols_segment(
            self.d1, self.d2, self.d_res_ps_nm, self.length_km, self.n1, self.n2,
            self.loss_db_per_km, self.gamma_per_w_km,
        )

    def ols2_only(self) -> "SegmentSpec":
        return replace(self, n1=0)

    def ols1_only(self) -> "SegmentSpec":
        return replace(self, n2=0)


@dataclass(frozen=True)
class Scenario:
    """One trace to produce.

    ``first_span`` is the segment-global index reported for the first span
    (11 for a run that starts at OLS2 of a 10+20 segment). ``mask`` overrides
    the all-on Kerr mask of cumulative mode.
    """

    scenario_id: str
    segment: SegmentSpec
    plan: ChannelPlan = ChannelPlan()
    mode: str = "cumulative"
    label: str | None = None
    seed: int = 1
    n_symbols: int = 2**13
    policy: StepPolicy = StepPolicy()
    rx: RxConfig = RxConfig()
    gn: GnGrid = GnGrid()
    first_span: int = 1
    mask: tuple[bool, ...] | None = None
    with_floor: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")

    @property
    def tag(self) -> str:
        return self.label or self.mode

    def metadata(self) -> dict:
        s, p = self.segment, self.plan
        return {
            "scenario_id": self.scenario_id,
            "mode": self.tag,
            "d1_ps_nm_km": s.d1,
            "d2_ps_nm_km": s.d2,
            "d_res_ps_nm": s.d_res_ps_nm,
            "length_km": s.length_km,
            "n1": s.n1,
            "n2": s.n2,
            "first_span": self.first_span,
            "cut_freq_hz": p.cut_freq,
            "baud_rate_gbaud": p.baud_rate / 1e9,
            "pump_offset_ghz": p.pump_offset / 1e9,
            "pump_grid_multiple": p.pump_grid_multiple,
            "cut_power_dbm": p.cut_power_dbm,
            "pump_power_dbm": p.pump_power_dbm,
            "seed": self.seed,
            "n_symbols": self.n_symbols,
        }


class ScenarioError(RuntimeError):
    """A scenario failed; ``partial`` holds the rows measured before."""

    def __init__(self, scenario_id: str, cause: BaseException, partial: XciTrace | None):
        super().__init__(f"{scenario_id}: {type(cause).__name__}: {cause}")
        self.scenario_id = scenario_id
        self.partial = partial


def _cut_power_at_taps(segment: LinkSegment, plan: ChannelPlan) -> np.ndarray:
    net = np.cumsum([st.net_gain_db for st in segment])
    return dbm_to_w(plan.cut_power_dbm + net)


def _floor(field, ref, segment, s: Scenario) -> np.ndarray:
    rec = run_link(
        field, segment, [False] * segment.n_spans, s.policy,
        on_tap=lambda i, f: measure_xci(f, s.plan, ref, _acc(segment, i), s.rx).snr_xci_db,
    )
    return np.asarray(rec.results, dtype=float)


def _acc(segment: LinkSegment, i: int) -> float:
    return float(sum(st.residual_dispersion_ps_nm for st in segment.stages[:i]))


def run_scenario(s: Scenario) -> XciTrace:
    """Produce the trace of one scenario (see module docstring for modes)."""
    segment = s.segment.build()
    n = segment.n_spans
    idx = np.arange(s.first_span, s.first_span + n)
    p_cut = _cut_power_at_taps(segment, s.plan)
    meta = s.metadata()

    if s.mode == "ign":
        sig2 = xci_incoherent_trace(segment, s.plan, s.gn)
        return XciTrace.from_increments(s.scenario_id, s.tag, idx, sig2, p_cut, None, meta)

    field, ref = build_wdm(s.plan, s.n_symbols, seeds=s.seed)
    floor = _floor(field, ref, segment, s) if s.with_floor else None
    done: list[float] = []

    def partial():
        k = len(done)
        if not k:
            return None
        fl = None if floor is None else floor[:k]
        if s.mode == "cumulative":
            return XciTrace.from_cumulative(s.scenario_id, s.tag, idx[:k], done, p_cut[:k], fl, meta)
        return XciTrace.from_increments(s.scenario_id, s.tag, idx[:k], done, p_cut[:k], fl, meta)

    try:
        if s.mode == "cumulative":
            mask = s.mask if s.mask is not None else (True,) * n

            def tap(i, f):
                m = measure_xci(f, s.plan, ref, _acc(segment, i), s.rx, cut_power_w=p_cut[i - 1])
                done.append(m.p_xci_w)
                log.debug("%s span %d: SNR_XCI %.2f dB", s.scenario_id, i, m.snr_xci_db)
                return m

            run_link(field, segment, mask, s.policy, on_tap=tap)
            return XciTrace.from_cumulative(s.scenario_id, s.tag, idx, done, p_cut, floor, meta)

        # intrinsic: the stages before span i carry no Kerr term, so the field
        # entering span i is the exact linear transport of the transmit field
        prefix = field
        for i in range(1, n + 1):
            one = segment.sub_segment(i, i)
            rec = run_link(prefix, one, [True], s.policy, taps="final", keep_snapshots=True)
            m = measure_xci(rec.snapshots[0], s.plan, ref, _acc(segment, i), s.rx, cut_power_w=p_cut[i - 1])
            done.append(m.p_xci_w)
            log.debug("%s intrinsic span %d: SNR_XCI %.2f dB", s.scenario_id, i, m.snr_xci_db)
            if i < n:
                prefix = run_link(prefix, one, [False], s.policy, taps="none").final
        return XciTrace.from_increments(s.scenario_id, s.tag, idx, done, p_cut, floor, meta)
    except Exception as exc:
        raise ScenarioError(s.scenario_id, exc, partial()) from exc


# --------------------------------------------------------------------------
# six-panel matrix


def panel_id(d1: float, d_res: float, pump_multiple: int = 2, baud_gbd: float = 32, length_km: float = 80) -> str:
    return f"rs{baud_gbd:g}_p{pump_multiple}_d{d1:g}_res{d_res:g}_l{length_km:g}"


def scale_settings(scale: str) -> dict:
    try:
        return dict(SCALES[scale])
    except KeyError:
        raise ValueError(f"unknown scale {scale!r}; expected one of {sorted(SCALES)}") from None


def panel_scenarios(
    d1: float,
    d2: float,
    d_res: float,
    plan: ChannelPlan,
    seed: int,
    n_symbols: int,
    policy: StepPolicy,
    rx: RxConfig,
    gn: GnGrid = GnGrid(),
    length_km: float = 80.0,
) -> list[Scenario]:
    """The four traces of one panel: full segment, OLS2-only, intrinsic, IGN."""
    seg = SegmentSpec(d1, d2, d_res, length_km)
    sid = panel_id(d1, d_res, plan.pump_grid_multiple, plan.baud_rate / 1e9, length_km)
    common = dict(plan=plan, seed=seed, n_symbols=n_symbols, policy=policy, rx=rx, gn=gn)
    return [
        Scenario(sid, seg, mode="cumulative", **common),
        Scenario(sid, seg.ols2_only(), mode="cumulative", label="cumulative_ols2", first_span=seg.n1 + 1, **common),
        Scenario(sid, seg, mode="intrinsic", **common),
        Scenario(sid, seg, mode="ign", **common),
    ]


def correlation_scenarios(
    d1: float, d_res: float, plan: ChannelPlan, seed: int, n_symbols: int,
    policy: StepPolicy, rx: RxConfig, n_spans: int = 10, length_km: float = 80.0,
) -> list[Scenario]:
    """Cumulative and intrinsic runs over a periodic ``n_spans`` window."""
    seg = SegmentSpec(d1, d1, d_res, length_km, n_spans, 0)
    sid = panel_id(d1, d_res, plan.pump_grid_multiple, plan.baud_rate / 1e9, length_km)
    common = dict(plan=plan, seed=seed, n_symbols=n_symbols, policy=policy, rx=rx, with_floor=False)
    return [
        Scenario(sid, seg, mode="cumulative", label="periodic", **common),
        Scenario(sid, seg, mode="intrinsic", label="periodic_intrinsic", **common),
    ]


@dataclass
class CampaignResult:
    traces: list[XciTrace] = field(default_factory=list)
    correlations: list[CorrelationSet] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    def trace(self, scenario_id: str, mode: str) -> XciTrace:
        for t in self.traces:
            if t.scenario_id == scenario_id and t.mode == mode:
                return t
        raise KeyError((scenario_id, mode))


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, workers)


def _safe_run(s: Scenario):
    try:
        return run_scenario(s), None
    except ScenarioError as exc:
        return exc.partial, str(exc)


def run_many(scenarios: list[Scenario], workers: int | None = None) -> tuple[list[XciTrace], list[dict]]:
    """Run scenarios with per-scenario failure isolation; output order
    follows input order regardless of the worker count."""
    workers = _worker_count(workers)
    if workers == 1 or len(scenarios) < 2:
        outcomes = [_safe_run(s) for s in scenarios]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_safe_run, scenarios))
    traces, failures = [], []
    for s, (trace, err) in zip(scenarios, outcomes):
        if err is not None:
            log.error("scenario failed: %s", err)
            failures.append({"scenario_id": s.scenario_id, "mode": s.tag, "error": err})
        if trace is not None:
            traces.append(trace)
    return traces, failures


def matrix_scenarios(
    scale: str = "desk",
    seed: int = 1,
    plan: ChannelPlan = ChannelPlan(),
    rx: RxConfig = RxConfig(),
    policy: StepPolicy | None = None,
    n_symbols: int | None = None,
    pump_multiples: tuple[int, ...] = (2, 4),
    gn: GnGrid = GnGrid(),
) -> tuple[list[Scenario], list[Scenario]]:
    """Panel scenarios (pump at the plan's grid multiple) and the extra
    periodic runs used for correlation extraction at the other multiples."""
    sc = scale_settings(scale)
    n_symbols = n_symbols or sc["n_symbols"]
    policy = policy or StepPolicy(sc["step_km"], precision=sc["precision"])
    panels = []
    for d_res in MATRIX_D_RES:
        for d1, d2 in MATRIX_D_PAIRS:
            panels += panel_scenarios(d1, d2, d_res, plan, seed, n_symbols, policy, rx, gn)
    extra = []
    for mult in pump_multiples:
        if mult == plan.pump_grid_multiple:
            continue
        p = replace(plan, pump_grid_multiple=mult)
        for d_res in MATRIX_D_RES:
            for d1, _ in MATRIX_D_PAIRS:
                extra += correlation_scenarios(d1, d_res, p, seed, n_symbols, policy, rx)
    return panels, extra


class MissingTraceError(ValueError):
    """A cumulative trace has no intrinsic partner."""


_PARTNER = {"cumulative": "intrinsic", "periodic": "periodic_intrinsic"}


def correlation_sets(traces: list[XciTrace], strict: bool = False) -> list[CorrelationSet]:
    """Coherency coefficients for every cumulative trace with an intrinsic
    partner of the same scenario. Two-OLS runs use their OLS1 window.

    With ``strict`` a missing partner or a non-periodic window raises;
    otherwise such scenarios are skipped with a warning.
    """
    by = {(t.scenario_id, t.mode): t for t in traces}
    out = []
    for (sid, mode), cum in by.items():
        if mode not in _PARTNER:
            continue
        intr = by.get((sid, _PARTNER[mode]))
        if intr is None:
            if strict:
                raise MissingTraceError(f"scenario {sid}: no {_PARTNER[mode]} trace for the {mode} trace")
            log.warning("no intrinsic trace for %s", sid)
            continue
        m = cum.meta
        n1 = m.get("n1", len(cum))
        cum, intr = cum.window(1, n1), intr.window(1, n1)
        if len(cum) < 2:
            continue
        seg = SegmentSpec(m["d1_ps_nm_km"], m["d1_ps_nm_km"], m["d_res_ps_nm"], m["length_km"], len(cum), 0).build()
        tags = {
            "scenario_id": sid,
            "pump_offset_ghz": m["pump_offset_ghz"],
            "baud_rate_gbaud": m["baud_rate_gbaud"],
        }
        try:
            out.append(correlation_set(cum, intr, seg, m["baud_rate_gbaud"] * 1e9, m["cut_freq_hz"], tags))
        except ValueError as exc:
            if strict:
                raise type(exc)(f"scenario {sid}: {exc}") from exc
            log.warning("no correlation set for %s: %s", sid, exc)
    return out


def run_paper_matrix(
    scale: str = "desk",
    seed: int = 1,
    plan: ChannelPlan = ChannelPlan(),
    rx: RxConfig = RxConfig(),
    policy: StepPolicy | None = None,
    n_symbols: int | None = None,
    workers: int | None = None,
    pump_multiples: tuple[int, ...] = (2, 4),
    gn: GnGrid = GnGrid(),
) -> CampaignResult:
    """All six panels in every trace kind, plus correlation sets."""
    panels, extra = matrix_scenarios(scale, seed, plan, rx, policy, n_symbols, pump_multiples, gn)
    traces, failures = run_many(panels + extra, workers)
    settings = {
        "scale": scale, "seed": seed, "plan": asdict(plan), "rx": asdict(rx),
        "policy": asdict(panels[0].policy), "n_symbols": panels[0].n_symbols,
        "pump_multiples": list(pump_multiples), "gn": asdict(gn),
    }
    prov = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash(settings),
        "seed": seed,
        "code_version": __version__,
    }
    return CampaignResult(traces, correlation_sets(traces), prov, failures)
