"""Dispersion-managed line description and unit conversions.

A :class:`LinkSegment` is an ordered cascade of optical line systems (OLS),
each an ordered list of :class:`SpanStage` (fiber span, lumped EDFA, lumped
DCU). Units follow the usual line-design conventions: km, dB/km,
ps/(nm km), ps/nm, 1/(W km). Frequencies are in Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

CUT_FREQUENCY_HZ = 193.9e12

_DB_TO_NEPER_POWER = np.log(10.0) / 10.0


@dataclass(frozen=True)
class SpanParams:
    """Fiber span parameters."""

    length_km: float
    loss_db_per_km: float = 0.2
    dispersion_ps_nm_km: float = 16.0
    gamma_per_w_km: float = 1.27

    def __post_init__(self):
        if not self.length_km > 0:
            raise ValueError(f"span length must be positive, got {self.length_km}")
        if self.loss_db_per_km < 0:
            raise ValueError(f"loss must be non-negative, got {self.loss_db_per_km}")
        if self.gamma_per_w_km < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma_per_w_km}")

    @property
    def alpha_per_km(self) -> float:
        """Power attenuation coefficient in 1/km."""
        return self.loss_db_per_km * _DB_TO_NEPER_POWER

    @property
    def accumulated_dispersion_ps_nm(self) -> float:
        return self.dispersion_ps_nm_km * self.length_km


@dataclass(frozen=True)
class DcuParams:
    """Lumped, purely linear dispersion compensation unit (no loss, no Kerr)."""

    dcu_dispersion_ps_nm: float = 0.0


@dataclass(frozen=True)
class SpanStage:
    """One fiber span followed by its EDFA and DCU."""

    span: SpanParams
    edfa_gain_db: float
    dcu: DcuParams = field(default_factory=DcuParams)

    @classmethod
    def transparent(cls, span: SpanParams, dcu: DcuParams | None = None) -> "SpanStage":
        return cls(span, transparency_gain(span), dcu if dcu is not None else DcuParams())

    @property
    def residual_dispersion_ps_nm(self) -> float:
        return self.span.accumulated_dispersion_ps_nm + self.dcu.dcu_dispersion_ps_nm

    @property
    def net_gain_db(self) -> float:
        return self.edfa_gain_db - self.span.loss_db_per_km * self.span.length_km


@dataclass(frozen=True)
class Ols:
    """A named optical line system: an ordered run of span stages."""

    name: str
    stages: tuple[SpanStage, ...]

    def __len__(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class LinkSegment:
    """Ordered cascade of OLSs; stage order is propagation order."""

    ols: tuple[Ols, ...]

    @property
    def stages(self) -> tuple[SpanStage, ...]:
        return tuple(st for o in self.ols for st in o.stages)

    @property
    def n_spans(self) -> int:
        return sum(len(o) for o in self.ols)

    def __len__(self) -> int:
        return self.n_spans

    def __iter__(self) -> Iterator[SpanStage]:
        return iter(self.stages)

    def ols_boundaries(self) -> list[int]:
        """1-based index of the first span of every OLS."""
        starts, k = [], 1
        for o in self.ols:
            starts.append(k)
            k += len(o)
        return starts

    def is_periodic(self) -> bool:
        stages = self.stages
        return all(st == stages[0] for st in stages)

    def sub_segment(self, first: int, last: int) -> "LinkSegment":
        """Spans ``first..last`` (1-based, inclusive), keeping OLS grouping."""
        out, k = [], 1
        for o in self.ols:
            keep = tuple(st for m, st in enumerate(o.stages, start=k) if first <= m <= last)
            if keep:
                out.append(Ols(o.name, keep))
            k += len(o)
        return LinkSegment(tuple(out))


@dataclass(frozen=True)
class DispersionMap:
    """Accumulated dispersion after each fiber (pre-DCU) and each DCU (post-DCU)."""

    span_index: np.ndarray
    pre_dcu_ps_nm: np.ndarray
    post_dcu_ps_nm: np.ndarray


def dcu_for_residual(span: SpanParams, d_res_ps_nm: float) -> DcuParams:
    """DCU that leaves ``d_res_ps_nm`` of residual dispersion after ``span``."""
    return DcuParams(d_res_ps_nm - span.dispersion_ps_nm_km * span.length_km)


def _dispersion_to_beta_factor(f_ref: float) -> float:
    # lambda^2 / (2 pi c), in m * s
    if not f_ref > 0:
        raise ValueError(f"reference frequency must be positive, got {f_ref}")
    lam = SPEED_OF_LIGHT / f_ref
    return lam**2 / (2 * np.pi * SPEED_OF_LIGHT)


def beta2_from_dispersion(d_ps_nm_km, f_ref: float = CUT_FREQUENCY_HZ):
    """Group velocity dispersion in ps^2/km; positive D gives negative beta2."""
    # ps/(nm km) -> s/m^2 is 1e-6; s^2/m -> ps^2/km is 1e27
    return -np.asarray(d_ps_nm_km) * 1e-6 * _dispersion_to_beta_factor(f_ref) * 1e27


def dispersion_from_beta2(beta2_ps2_km, f_ref: float = CUT_FREQUENCY_HZ):
    """Inverse of :func:`beta2_from_dispersion`."""
    return -np.asarray(beta2_ps2_km) * 1e-27 / _dispersion_to_beta_factor(f_ref) / 1e-6


def beta_accumulated_s2(d_acc_ps_nm, f_ref: float = CUT_FREQUENCY_HZ):
    """Length-integrated beta2 (s^2) for an accumulated dispersion in ps/nm."""
    # ps/nm -> s/m is 1e-3
    return -np.asarray(d_acc_ps_nm) * 1e-3 * _dispersion_to_beta_factor(f_ref)


def effective_length(span: SpanParams) -> float:
    """Nonlinear effective length (km)."""
    a = span.alpha_per_km
    if a == 0:
        return span.length_km
    return -np.expm1(-a * span.length_km) / a


def transparency_gain(span: SpanParams) -> float:
    """EDFA gain (dB) that exactly recovers the span loss."""
    return span.loss_db_per_km * span.length_km


def dispersion_map(segment: LinkSegment) -> DispersionMap:
    pre, post = [], []
    acc = 0.0
    for st in segment:
        acc += st.span.accumulated_dispersion_ps_nm
        pre.append(acc)
        acc += st.dcu.dcu_dispersion_ps_nm
        post.append(acc)
    return DispersionMap(
        np.arange(1, len(pre) + 1), np.asarray(pre, float), np.asarray(post, float)
    )


def periodic_ols(
    name: str,
    n_spans: int,
    span: SpanParams,
    d_res_ps_nm: float | None,
    edfa_gain_db: float | None = None,
) -> Ols:
    """OLS of ``n_spans`` identical stages.

    ``d_res_ps_nm=None`` means no DCU (uncompensated). The EDFA runs in
    transparency unless ``edfa_gain_db`` is given.
    """
    dcu = DcuParams() if d_res_ps_nm is None else dcu_for_residual(span, d_res_ps_nm)
    gain = transparency_gain(span) if edfa_gain_db is None else edfa_gain_db
    return Ols(name, tuple(SpanStage(span, gain, dcu) for _ in range(n_spans)))


def two_ols_segment(
    d1: float,
    d2: float,
    d_res_ps_nm: float | None,
    length_km: float = 80.0,
    n1: int = 10,
    n2: int = 20,
    loss_db_per_km: float = 0.2,
    gamma_per_w_km: float = 1.27,
) -> LinkSegment:
    """The two-OLS disaggregated segment used throughout the campaign."""
    ols = []
    for name, d, n in (("OLS1", d1, n1), ("OLS2", d2, n2)):
        if n > 0:
            span = SpanParams(length_km, loss_db_per_km, d, gamma_per_w_km)
            ols.append(periodic_ols(name, n, span, d_res_ps_nm))
    return LinkSegment(tuple(ols))


def segment_from_stages(stages: Sequence[SpanStage], name: str = "OLS1") -> LinkSegment:
    return LinkSegment((Ols(name, tuple(stages)),))
