"""Incoherent GN-model reference for single-pump XCI.

The GN reference double integral is evaluated at the CUT centre over the
two XCI islands (one spectral factor in the CUT band, two in the pump
band), which are mirror images, hence the factor 2. Power spectral
densities are rectangular, ``G = P / R_s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .topology import CUT_FREQUENCY_HZ, LinkSegment, SpanParams, beta2_from_dispersion
from .txsignal import ChannelPlan, dbm_to_w, w_to_dbm


class GnConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Carrier:
    freq: float
    baud_rate: float
    power_dbm: float

    @property
    def psd(self) -> float:
        return float(dbm_to_w(self.power_dbm)) / self.baud_rate


@dataclass(frozen=True)
class GnGrid:
    """Integration grid settings: initial panels and nodes, refinement stop."""

    panels: int = 32
    nodes: int = 8
    tolerance_db: float = 0.05
    max_refinements: int = 8

    def __post_init__(self):
        if self.panels < 2 or self.panels % 2 or self.nodes < 1:
            raise ValueError("need an even panel count >= 2 and at least one node")
        if not self.tolerance_db > 0 or self.max_refinements < 1:
            raise ValueError("invalid refinement settings")


@dataclass(frozen=True)
class GnScenario:
    span: SpanParams
    cut: Carrier
    pump: Carrier
    panels: int = 32
    nodes: int = 8
    tolerance_db: float = 0.05
    max_refinements: int = 8
    ref_freq: float = CUT_FREQUENCY_HZ

    def __post_init__(self):
        gap = abs(self.pump.freq - self.cut.freq)
        if gap < 0.5 * (self.cut.baud_rate + self.pump.baud_rate):
            raise ValueError("CUT and pump bands overlap")


def _link_kernel(alpha, beta2_s2_km, length, x):
    """|rho|^2 of one span at (f1 - f)(f2 - f) = x (Hz^2), in km^2."""
    ph = 4 * np.pi**2 * beta2_s2_km * x
    num = -np.expm1(-alpha * length + 1j * ph * length) if alpha else 1 - np.exp(1j * ph * length)
    den = alpha - 1j * ph
    out = np.empty_like(ph)
    small = np.abs(den) < 1e-300
    out[~small] = np.abs(num[~small] / den[~small]) ** 2
    out[small] = length**2
    return out


def _island_integral(scn: GnScenario, panels: int, nodes: int) -> float:
    """Integral of |rho|^2 over one XCI island, in km^2 Hz^2."""
    span = scn.span
    alpha = span.alpha_per_km
    beta2 = float(beta2_from_dispersion(span.dispersion_ps_nm_km, scn.ref_freq)) * 1e-24  # s^2/km
    rc, rp = scn.cut.baud_rate, scn.pump.baud_rate
    dp = scn.pump.freq - scn.cut.freq

    # u = f1 - f across the CUT band, split at u = 0 where the kernel peaks
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.concatenate([np.linspace(-rc / 2, 0, panels // 2 + 1), np.linspace(0, rc / 2, panels // 2 + 1)[1:]])
    a, b = edges[:-1, None], edges[1:, None]
    u = (0.5 * (b - a) * gx + 0.5 * (a + b)).ravel()
    wu = (0.5 * (b - a) * gw).ravel()

    # f2 - f over pump band intersected with (pump band - u)
    ix, iw = np.polynomial.legendre.leggauss(4 * nodes)
    lo = np.maximum(dp - rp / 2, dp - rp / 2 - u)
    hi = np.minimum(dp + rp / 2, dp + rp / 2 - u)
    v = 0.5 * (hi - lo)[:, None] * ix + 0.5 * (hi + lo)[:, None]
    wv = 0.5 * (hi - lo)[:, None] * iw
    k = _link_kernel(alpha, beta2, span.length_km, u[:, None] * v)
    return float(np.sum(wu[:, None] * wv * k))


def xci_psd(scn: GnScenario, panels: int | None = None, nodes: int | None = None) -> float:
    """NLI power spectral density (W/Hz) on the CUT centre from the pump."""
    gamma = scn.span.gamma_per_w_km
    integral = _island_integral(scn, panels or scn.panels, nodes or scn.nodes)
    return 16 / 27 * gamma**2 * scn.cut.psd * scn.pump.psd**2 * 2 * integral


def xci_single_span(scn: GnScenario) -> float:
    """XCI power (dBm) on the CUT after one span, locally-white over R_s.

    The integration grid is doubled until two successive results agree
    within ``scn.tolerance_db``.
    """
    return float(w_to_dbm(xci_single_span_w(scn)))


def xci_single_span_w(scn: GnScenario) -> float:
    return _converged(scn) * scn.cut.baud_rate


@lru_cache(maxsize=256)
def _converged(scn: GnScenario) -> float:
    panels, nodes = scn.panels, scn.nodes
    prev = xci_psd(scn, panels, nodes)
    for _ in range(scn.max_refinements):
        panels *= 2
        nodes *= 2
        cur = xci_psd(scn, panels, nodes)
        if prev > 0 and abs(10 * np.log10(cur / prev)) < scn.tolerance_db:
            return cur
        prev = cur
    raise GnConvergenceError(
        f"GN integral did not settle to {scn.tolerance_db} dB after {scn.max_refinements} refinements"
    )


def span_input_powers(segment: LinkSegment, plan: ChannelPlan) -> tuple[np.ndarray, np.ndarray]:
    """CUT and pump launch powers (dBm) at the input of every span."""
    net = np.concatenate([[0.0], np.cumsum([st.net_gain_db for st in segment])[:-1]])
    pump = plan.pump_power_dbm if plan.has_pump else -np.inf
    return plan.cut_power_dbm + net, pump + net


def xci_incoherent_trace(segment: LinkSegment, plan: ChannelPlan, grid: GnGrid = GnGrid()) -> np.ndarray:
    """Per-span IGN XCI powers (W); DCU settings play no role."""
    cut_p, pump_p = span_input_powers(segment, plan)
    out = []
    for st, pc, pp in zip(segment, cut_p, pump_p):
        if not np.isfinite(pp):
            out.append(0.0)
            continue
        scn = GnScenario(
            st.span,
            Carrier(plan.cut_freq, plan.baud_rate, float(pc)),
            Carrier(plan.pump_freq, plan.baud_rate, float(pp)),
            grid.panels,
            grid.nodes,
            grid.tolerance_db,
            grid.max_refinements,
            ref_freq=plan.cut_freq,
        )
        out.append(xci_single_span_w(scn))
    return np.asarray(out)
