"""JSON run configuration.

Sections and their defaults (units are part of the key names):

segment
    ``d1``, ``d2`` dispersion of OLS1 / OLS2 [ps/(nm km)] (4, 16);
    ``d_res_ps_nm`` residual dispersion per span, ``null`` for no DCU (40);
    ``length_km`` (80); ``n1``, ``n2`` span counts (10, 20);
    ``loss_db_per_km`` (0.2); ``gamma_per_w_km`` (1.27)
channels
    ``cut_freq`` [Hz] (193.9e12); ``grid_spacing`` [Hz] (37.5e9);
    ``pump_grid_multiple`` (2); ``baud_rate`` [Bd] (32e9);
    ``cut_power_dbm`` (-20); ``pump_power_dbm`` (1, ``null`` for CUT only);
    ``predistortion_ps_nm`` (102400); ``rolloff`` (0.1); ``prbs_degree`` (17)
rx
    ``lms_taps`` (42); ``lms_mu`` (1e-4); ``samples_per_symbol`` (2);
    ``cpe_block`` (64); ``discard`` LMS training iterations (4096);
    ``snr_cap_db`` (60); ``matched_filter`` (true)
ssfm
    ``step_km`` and ``precision`` (``null``: taken from the scale);
    ``max_nonlinear_phase`` [rad] (``null``: uniform steps);
    ``scheme`` ``"symmetric"`` or ``"simple"``; ``linear_shortcut`` (true)
gn
    ``panels`` (32); ``nodes`` (8); ``tolerance_db`` (0.05);
    ``max_refinements`` (8)
campaign
    ``modes`` subset of cumulative, cumulative_ols2, intrinsic, ign (all);
    ``seed`` master seed (1); ``scale`` ``"desk"`` or ``"full"``;
    ``n_symbols`` (``null``: from the scale); ``scenario_id`` (``null``: derived)
output
    ``directory`` ("out"); ``traces`` ("traces.csv"); ``summary``
    ("summary.json"); ``dispersion_map`` ("dispersion_map.csv");
    ``scatter`` ("scatter.csv")
"""

from __future__ import annotations

import json
import types
import typing
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .campaign import SCALES, Scenario, SegmentSpec, config_hash, panel_id, scale_settings
from .gnmodel import GnGrid
from .rxdsp import RxConfig
from .ssfm import StepPolicy
from .txsignal import ChannelPlan

TRACE_MODES = ("cumulative", "cumulative_ols2", "intrinsic", "ign")


class ConfigError(ValueError):
    """Invalid configuration document."""


@dataclass(frozen=True)
class SsfmSection:
    step_km: float | None = None
    precision: str | None = None
    max_nonlinear_phase: float | None = None
    scheme: str = "symmetric"
    linear_shortcut: bool = True


@dataclass(frozen=True)
class CampaignSection:
    modes: tuple[str, ...] = TRACE_MODES
    seed: int = 1
    scale: str = "desk"
    n_symbols: int | None = None
    scenario_id: str | None = None

    def __post_init__(self):
        bad = [m for m in self.modes if m not in TRACE_MODES]
        if bad or not self.modes:
            raise ValueError(f"modes must be a non-empty subset of {TRACE_MODES}, got {list(self.modes)}")
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {sorted(SCALES)}")
        if self.n_symbols is not None and (self.n_symbols < 2 or self.n_symbols & (self.n_symbols - 1)):
            raise ValueError("n_symbols must be a power of two")


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    traces: str = "traces.csv"
    summary: str = "summary.json"
    dispersion_map: str = "dispersion_map.csv"
    scatter: str = "scatter.csv"


@dataclass(frozen=True)
class Config:
    segment: SegmentSpec = SegmentSpec()
    channels: ChannelPlan = ChannelPlan()
    rx: RxConfig = RxConfig()
    ssfm: SsfmSection = SsfmSection()
    gn: GnGrid = GnGrid()
    campaign: CampaignSection = CampaignSection()
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def hash(self) -> str:
        # output locations do not change results
        d = self.to_dict()
        d.pop("output")
        return config_hash(d)

    def with_overrides(self, seed: int | None = None, scale: str | None = None, out: str | None = None) -> "Config":
        c = self
        if seed is not None or scale is not None:
            camp = replace(
                c.campaign,
                seed=c.campaign.seed if seed is None else seed,
                scale=c.campaign.scale if scale is None else scale,
            )
            c = replace(c, campaign=camp)
        if out is not None:
            c = replace(c, output=replace(c.output, directory=out))
        return c

    def policy(self) -> StepPolicy:
        sc = scale_settings(self.campaign.scale)
        s = self.ssfm
        return StepPolicy(
            sc["step_km"] if s.step_km is None else s.step_km,
            s.max_nonlinear_phase,
            s.scheme,
            s.linear_shortcut,
            sc["precision"] if s.precision is None else s.precision,
        )

    def n_symbols(self) -> int:
        n = self.campaign.n_symbols
        return scale_settings(self.campaign.scale)["n_symbols"] if n is None else n

    def scenario_id(self) -> str:
        if self.campaign.scenario_id:
            return self.campaign.scenario_id
        p, s = self.channels, self.segment
        return panel_id(s.d1, s.d_res_ps_nm, p.pump_grid_multiple, p.baud_rate / 1e9, s.length_km)

    def scenarios(self) -> list[Scenario]:
        """One scenario per configured trace mode, in ``TRACE_MODES`` order."""
        common = dict(
            plan=self.channels, seed=self.campaign.seed, n_symbols=self.n_symbols(),
            policy=self.policy(), rx=self.rx, gn=self.gn,
        )
        sid, seg = self.scenario_id(), self.segment
        out = []
        for mode in TRACE_MODES:
            if mode not in self.campaign.modes:
                continue
            if mode == "cumulative_ols2":
                if seg.n2 == 0:
                    continue
                out.append(Scenario(sid, seg.ols2_only(), mode="cumulative", label=mode,
                                    first_span=seg.n1 + 1, **common))
            else:
                out.append(Scenario(sid, seg, mode=mode, **common))
        return out


SECTIONS = {f.name: f for f in fields(Config)}


def _check_value(value, hint, where: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        for a in args:
            if a is type(None):
                continue
            try:
                return _check_value(value, a, where)
            except ConfigError:
                pass
        raise ConfigError(f"{where}: unexpected value {value!r}")
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(_check_value(v, args[0], f"{where}[]") for v in value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported type {hint}")


def _section(cls, raw, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be an object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"section '{name}': unknown key(s) {', '.join(unknown)}")
    kwargs = {k: _check_value(v, hints[k], f"{name}.{k}") for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{name}': {exc}") from exc


def config_from_dict(raw: dict) -> Config:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    hints = typing.get_type_hints(Config)
    return Config(**{k: _section(hints[k], v, k) for k, v in raw.items()})


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _reject_constant(name):
    raise ConfigError(f"non-standard JSON constant {name}")


def parse_config(text: str) -> Config:
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return config_from_dict(raw)


def load_config(path: str | Path) -> Config:
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from None
