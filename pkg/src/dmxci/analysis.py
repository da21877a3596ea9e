"""XCI gradients, intrinsic powers, coherency coefficients and their
dispersion normalization.

All power arithmetic is linear (W); dB values are only produced for
reporting. Gradients are expressed in dB relative to 1 mW.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .topology import CUT_FREQUENCY_HZ, LinkSegment, SpanParams, beta2_from_dispersion, beta_accumulated_s2, effective_length

PERIODIC_TOLERANCE_DB = 0.5


class NonPeriodicError(ValueError):
    """Intrinsic powers differ too much for a stationary (lag) description."""


def to_dbm(p_w):
    p = np.asarray(p_w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, 10 * np.log10(np.where(p > 0, p, 1.0) / 1e-3), -np.inf)


@dataclass
class XciTrace:
    """Per-span XCI measurements for one scenario and one mode.

    ``p_xci_w`` is the accumulated XCI power after each span and
    ``delta_p_w`` its increment. For ``intrinsic`` and ``ign`` modes the
    accumulation is the incoherent running sum of the per-span values.
    """

    scenario_id: str
    mode: str
    span_index: np.ndarray
    snr_xci_db: np.ndarray
    p_xci_w: np.ndarray
    delta_p_w: np.ndarray
    floor_snr_db: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.span_index)

    @property
    def delta_p_db(self) -> np.ndarray:
        return to_dbm(self.delta_p_w)

    @property
    def p_xci_dbm(self) -> np.ndarray:
        return to_dbm(self.p_xci_w)

    def window(self, first: int, last: int) -> "XciTrace":
        """Rows with ``first <= span_index <= last``; increments are kept."""
        sel = (self.span_index >= first) & (self.span_index <= last)
        fl = None if self.floor_snr_db is None else self.floor_snr_db[sel]
        return XciTrace(
            self.scenario_id, self.mode, self.span_index[sel], self.snr_xci_db[sel],
            self.p_xci_w[sel], self.delta_p_w[sel], fl, dict(self.meta),
        )

    @classmethod
    def from_cumulative(cls, scenario_id, mode, span_index, p_xci_w, p_cut_w, floor_snr_db=None, meta=None):
        p = np.asarray(p_xci_w, dtype=float)
        with np.errstate(divide="ignore"):
            snr = 10 * np.log10(np.asarray(p_cut_w) / p)
        return cls(
            scenario_id, mode, np.asarray(span_index), snr, p, gradient(p),
            None if floor_snr_db is None else np.asarray(floor_snr_db, dtype=float), dict(meta or {}),
        )

    @classmethod
    def from_increments(cls, scenario_id, mode, span_index, delta_p_w, p_cut_w, floor_snr_db=None, meta=None):
        d = np.asarray(delta_p_w, dtype=float)
        t = cls.from_cumulative(scenario_id, mode, span_index, np.cumsum(d), p_cut_w, floor_snr_db, meta)
        # keep the increments bit-exact rather than re-differencing the sum
        t.delta_p_w = d.copy()
        return t


def gradient(p_cum_w) -> np.ndarray:
    """XCI power gradient ``P_i - P_{i-1}`` with ``P_0 = 0``, linear units."""
    p = np.asarray(p_cum_w, dtype=float)
    d = np.diff(p, prepend=0.0)
    if np.any(d < 0):
        warnings.warn(
            f"accumulated XCI power decreases at {int(np.sum(d < 0))} span(s); "
            "measurement noise exceeds the increment there",
            RuntimeWarning,
            stacklevel=2,
        )
    return d


def _common_sigma2(sigma2) -> float:
    s = np.atleast_1d(np.asarray(sigma2, dtype=float))
    if np.any(s <= 0):
        raise ValueError("intrinsic XCI powers must be positive")
    spread = 10 * np.log10(s.max() / s.min())
    if spread > PERIODIC_TOLERANCE_DB:
        raise NonPeriodicError(
            f"intrinsic powers spread over {spread:.2f} dB (> {PERIODIC_TOLERANCE_DB} dB); "
            "the lag description needs a periodic segment"
        )
    return float(s.mean())


def extract_c_lags(delta_p_w, sigma2) -> np.ndarray:
    """Coherency coefficients per lag from measured gradients.

    With ``C_ij = c_{i-j}`` and a common intrinsic power, the gradient
    obeys ``dP_i - dP_{i-1} = 2 sigma^2 c_{i-1}``. Returns lags 1..N-1.
    """
    s2 = _common_sigma2(sigma2)
    d = np.asarray(delta_p_w, dtype=float)
    return np.diff(d) / (2 * s2)


def synthesize_delta_p(sigma2, c_lags) -> np.ndarray:
    """Forward model ``dP_i = s_i^2 + 2 sum_{j<i} c_{i-j} s_i s_j``."""
    c = np.asarray(c_lags, dtype=float)
    n = c.size + 1
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (n,))
    s = np.sqrt(s2)
    out = s2.copy()
    for i in range(1, n):
        out[i] += 2 * s[i] * np.dot(c[i - 1::-1], s[:i])
    return out


def theta_span(segment: LinkSegment, i: int, j: int, baud_rate: float, f_ref: float = CUT_FREQUENCY_HZ) -> float:
    """Dimensionless residual dispersion accumulated over spans ``j..i-1``
    (1-based): ``pi R_s^2 |sum(beta2_k L_k + beta_DCU,k)|``."""
    if not 1 <= j <= i <= segment.n_spans:
        raise ValueError(f"need 1 <= j <= i <= {segment.n_spans}, got i={i}, j={j}")
    stages = segment.stages[j - 1:i - 1]
    d_res = sum(st.residual_dispersion_ps_nm for st in stages)
    return float(np.pi * baud_rate**2 * abs(beta_accumulated_s2(d_res, f_ref)))


def theta_eff(span: SpanParams, baud_rate: float, f_ref: float = CUT_FREQUENCY_HZ) -> float:
    """``pi R_s^2 |beta2| L_eff`` of one span."""
    beta2_s2_km = abs(float(beta2_from_dispersion(span.dispersion_ps_nm_km, f_ref))) * 1e-24
    return float(np.pi * baud_rate**2 * beta2_s2_km * effective_length(span))


@dataclass
class CorrelationSet:
    """Coherency coefficients of a periodic run with their abscissae."""

    sigma2_w: np.ndarray
    lags: np.ndarray
    c_lag: np.ndarray
    theta_ratio: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.c_lag)


def correlation_set(
    cumulative: XciTrace,
    intrinsic: XciTrace,
    segment: LinkSegment,
    baud_rate: float,
    f_ref: float = CUT_FREQUENCY_HZ,
    meta: dict | None = None,
) -> CorrelationSet:
    """Coherency coefficients of a periodic segment from its cumulative and
    intrinsic traces (same span rows, same order)."""
    if len(cumulative) != len(intrinsic) or not np.array_equal(cumulative.span_index, intrinsic.span_index):
        raise ValueError("cumulative and intrinsic traces cover different spans")
    if not segment.is_periodic():
        raise NonPeriodicError("correlation extraction needs identical stages")
    sigma2 = intrinsic.delta_p_w
    c = extract_c_lags(cumulative.delta_p_w, sigma2)
    lags = np.arange(1, len(c) + 1)
    te = theta_eff(segment.stages[0].span, baud_rate, f_ref)
    ratio = np.array([theta_span(segment, 1 + k, 1, baud_rate, f_ref) for k in lags]) / te
    m = {"d_res_ps_nm": segment.stages[0].residual_dispersion_ps_nm,
         "dispersion_ps_nm_km": segment.stages[0].span.dispersion_ps_nm_km}
    m.update(meta or {})
    return CorrelationSet(np.asarray(sigma2, dtype=float), lags, c, ratio, m)


def scatter_points(correlations: CorrelationSet | None) -> list[tuple[float, float, dict]]:
    """``(theta_span/theta_eff, c_lag, tags)`` for every lag."""
    if correlations is None or len(correlations) == 0:
        return []
    return [
        (float(t), float(c), dict(correlations.meta, lag=int(k)))
        for k, t, c in zip(correlations.lags, correlations.theta_ratio, correlations.c_lag)
    ]


def asymptote(delta_p_w, tail_window: int = 3, band_db: float = 0.5) -> tuple[float, int | None]:
    """Settled gradient level (dB re 1 mW) and the 1-based index from which
    the gradient stays within ``band_db`` of it (``None`` if it never does)."""
    d = np.asarray(delta_p_w, dtype=float)
    if len(d) < tail_window or tail_window < 1:
        raise ValueError(f"trace of length {len(d)} is shorter than tail window {tail_window}")
    level = float(to_dbm(np.mean(d[-tail_window:])))
    inside = np.abs(to_dbm(d) - level) <= band_db
    settle = None
    for k in range(len(d) - 1, -1, -1):
        if not inside[k]:
            break
        settle = k + 1
    return level, settle


def ls_slope(x, y) -> float:
    """Least-squares slope of ``y`` against ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(x, y, 1)[0])
