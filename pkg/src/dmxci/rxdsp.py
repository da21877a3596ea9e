"""Data-aided coherent receiver used as an XCI measurement instrument.

Chain: CUT isolation and resampling, chromatic dispersion compensation,
2x2 butterfly LMS equalizer (T/2-spaced), block carrier phase estimation,
EVM-based SNR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.fft as sfft

from .txsignal import ChannelPlan, SampledField, SymbolReference, apply_dispersion, rrc_response, w_to_dbm


class EqualizerDivergence(RuntimeError):
    """The LMS error energy ran away."""


@dataclass(frozen=True)
class RxConfig:
    lms_taps: int = 42
    lms_mu: float = 1e-4
    samples_per_symbol: int = 2
    cpe_block: int = 64
    discard: int = 4096
    snr_cap_db: float = 60.0
    matched_filter: bool = True

    def __post_init__(self):
        if self.lms_taps < 1:
            raise ValueError("need at least one equalizer tap")
        if self.lms_mu < 0:
            raise ValueError("LMS step must be non-negative")
        if self.samples_per_symbol < 1 or self.cpe_block < 1 or self.discard < 0:
            raise ValueError("invalid receiver sizes")


@dataclass(frozen=True)
class RxResult:
    evm: float
    snr_db: float
    cdc_ps_nm: float
    n_symbols: int


@dataclass(frozen=True)
class XciMeasurement:
    snr_xci_db: float
    p_xci_w: float
    rx: RxResult

    @property
    def p_xci_dbm(self) -> float:
        return float(w_to_dbm(self.p_xci_w))


def isolate_cut(
    field: SampledField,
    cut_freq: float,
    baud_rate: float,
    rolloff: float,
    samples_per_symbol: int = 2,
    matched: bool = True,
) -> SampledField:
    """Bring the CUT to baseband, brick-wall filter it, optionally apply the
    matched RRC, and resample to ``samples_per_symbol``.

    The returned field is centred on ``cut_freq`` and keeps the input's
    dispersion frame.
    """
    n = len(field)
    fs_out = samples_per_symbol * baud_rate
    half_band = 0.5 * (1 + rolloff) * baud_rate
    offset = cut_freq - field.center_freq
    if abs(offset) + half_band > field.sample_rate / 2:
        raise ValueError("CUT band is clipped by the field bandwidth")
    if half_band > fs_out / 2:
        raise ValueError("output rate too low for the CUT band")
    m_f = n * fs_out / field.sample_rate
    m = int(round(m_f))
    if abs(m - m_f) > 1e-9:
        raise ValueError("output rate does not divide the field grid")
    k = offset * n / field.sample_rate
    kr = int(round(k))
    if abs(k - kr) > 1e-6:
        raise ValueError("CUT frequency is not on the FFT grid")

    spec = np.roll(sfft.fft(field.data, axis=-1), -kr, axis=-1)
    f = sfft.fftfreq(n, 1 / field.sample_rate)
    spec[:, np.abs(f) > half_band] = 0.0
    if matched:
        spec *= rrc_response(f, baud_rate, rolloff)
    out = np.zeros((2, m), dtype=complex)
    h = m // 2
    out[:, :h] = spec[:, :h]
    out[:, m - h:] = spec[:, n - h:]
    sig = sfft.ifft(out, axis=-1) * (m / n)
    return SampledField(sig[0], sig[1], fs_out, cut_freq, field.ref_freq)


def cdc(signal: SampledField, total_acc_dispersion_ps_nm: float) -> SampledField:
    """Undo ``total_acc_dispersion_ps_nm`` of accumulated dispersion."""
    return apply_dispersion(signal, -total_acc_dispersion_ps_nm)


@numba.njit(cache=True)
def _lms_kernel(x, ref, ntaps, mu, sps, n_iter, window):
    m = x.shape[1]
    nsym = ref.shape[1]
    center = ntaps // 2
    w = np.zeros((2, 2, ntaps), dtype=np.complex128)
    w[0, 0, center] = 1.0
    w[1, 1, center] = 1.0
    out = np.empty((2, nsym), dtype=np.complex128)
    buf = np.empty((2, ntaps), dtype=np.complex128)
    first = -1.0
    acc = 0.0
    cnt = 0
    diverged = False
    for it in range(n_iter):
        k = it % nsym
        base = sps * k + center
        for t in range(ntaps):
            idx = (base - t) % m
            buf[0, t] = x[0, idx]
            buf[1, t] = x[1, idx]
        y0 = 0j
        y1 = 0j
        for t in range(ntaps):
            y0 += w[0, 0, t] * buf[0, t] + w[0, 1, t] * buf[1, t]
            y1 += w[1, 0, t] * buf[0, t] + w[1, 1, t] * buf[1, t]
        e0 = ref[0, k] - y0
        e1 = ref[1, k] - y1
        if mu != 0.0:
            for t in range(ntaps):
                c0 = buf[0, t].conjugate()
                c1 = buf[1, t].conjugate()
                w[0, 0, t] += mu * e0 * c0
                w[0, 1, t] += mu * e0 * c1
                w[1, 0, t] += mu * e1 * c0
                w[1, 1, t] += mu * e1 * c1
        if it >= n_iter - nsym:
            out[0, k] = y0
            out[1, k] = y1
        acc += e0.real * e0.real + e0.imag * e0.imag + e1.real * e1.real + e1.imag * e1.imag
        cnt += 1
        if cnt == window:
            acc /= cnt
            if not np.isfinite(acc):
                diverged = True
                break
            if first < 0:
                first = acc
            elif acc > 10.0 * max(first, 1e-2):
                diverged = True
                break
            acc = 0.0
            cnt = 0
    return out, w, diverged


def lms_equalize(
    signal: SampledField | np.ndarray,
    reference: np.ndarray,
    cfg: RxConfig = RxConfig(),
    return_taps: bool = False,
):
    """Data-aided 2x2 butterfly LMS equalizer.

    Taps start as a centre-tap identity. The symbol sequence is reused
    cyclically: ``cfg.discard`` training iterations are followed by one full
    pass whose outputs (one per symbol, 1 sample/symbol) are returned.
    """
    x = signal.data if isinstance(signal, SampledField) else np.asarray(signal, dtype=complex)
    ref = np.ascontiguousarray(reference, dtype=complex)
    if x.shape[1] != cfg.samples_per_symbol * ref.shape[1]:
        raise ValueError("signal length does not match reference symbols at the equalizer rate")
    n_iter = cfg.discard + ref.shape[1]
    out, w, diverged = _lms_kernel(
        np.ascontiguousarray(x), ref, cfg.lms_taps, float(cfg.lms_mu),
        cfg.samples_per_symbol, n_iter, 1024,
    )
    if diverged:
        raise EqualizerDivergence(
            f"LMS error energy grew tenfold (mu={cfg.lms_mu}, taps={cfg.lms_taps})"
        )
    return (out, w) if return_taps else out


def cpe(symbols: np.ndarray, reference: np.ndarray, block: int = 64) -> np.ndarray:
    """Data-aided block phase recovery: rotate each block by
    ``-arg(sum(r * conj(s)))``."""
    r = np.atleast_2d(np.asarray(symbols, dtype=complex))
    s = np.atleast_2d(np.asarray(reference, dtype=complex))
    if r.shape != s.shape:
        raise ValueError("symbol and reference counts differ")
    out = r.copy()
    n = r.shape[-1]
    for start in range(0, n, block):
        sl = slice(start, min(start + block, n))
        corr = np.sum(r[:, sl] * np.conj(s[:, sl]), axis=-1, keepdims=True)
        out[:, sl] *= np.exp(-1j * np.angle(corr))
    return out if np.ndim(symbols) > 1 else out[0]


def evm_snr(
    symbols: np.ndarray, reference: np.ndarray, cap_db: float = 60.0, cdc_ps_nm: float = 0.0
) -> RxResult:
    """EVM against the reference and SNR = 1/EVM^2, capped at ``cap_db``."""
    r = np.asarray(symbols, dtype=complex)
    s = np.asarray(reference, dtype=complex)
    if r.size == 0:
        raise ValueError("no symbols to evaluate")
    if r.shape != s.shape:
        raise ValueError("symbol and reference counts differ")
    evm = float(np.sqrt(np.mean(np.abs(r - s) ** 2) / np.mean(np.abs(s) ** 2)))
    snr = cap_db if evm == 0 else min(-20 * np.log10(evm), cap_db)
    return RxResult(evm, float(snr), cdc_ps_nm, int(r.shape[-1]))


def _normalize(sig: SampledField, reference: np.ndarray, sps: int) -> SampledField:
    # data-aided least-squares gain per polarization, taken at the symbol instants
    d = sig.data
    r = d[:, ::sps]
    g = np.sum(r * np.conj(reference), axis=-1, keepdims=True) / np.sum(
        np.abs(reference) ** 2, axis=-1, keepdims=True
    )
    return SampledField.from_array(d / g, sig)


def receive(
    field: SampledField,
    plan: ChannelPlan,
    reference: SymbolReference,
    total_acc_dispersion_ps_nm: float,
    cfg: RxConfig = RxConfig(),
) -> RxResult:
    """Full chain from an optical snapshot to EVM/SNR of the CUT."""
    sig = isolate_cut(
        field, plan.cut_freq, plan.baud_rate, plan.rolloff, cfg.samples_per_symbol, cfg.matched_filter
    )
    sig = cdc(sig, total_acc_dispersion_ps_nm)
    sig = _normalize(sig, reference.cut, cfg.samples_per_symbol)
    eq = lms_equalize(sig, reference.cut, cfg)
    rec = cpe(eq, reference.cut, cfg.cpe_block)
    return evm_snr(rec, reference.cut, cfg.snr_cap_db, total_acc_dispersion_ps_nm)


def measure_xci(
    field: SampledField,
    plan: ChannelPlan,
    reference: SymbolReference,
    line_dispersion_ps_nm: float,
    cfg: RxConfig = RxConfig(),
    cut_power_w: float | None = None,
) -> XciMeasurement:
    """SNR of the CUT and the implied XCI power ``P_cut / SNR``.

    ``line_dispersion_ps_nm`` is the dispersion accumulated by the line up to
    the tap; the transmitter predistortion is added here. ``cut_power_w``
    defaults to the launch power (transparent line).
    """
    total = plan.predistortion_ps_nm + line_dispersion_ps_nm
    rx = receive(field, plan, reference, total, cfg)
    p_cut = plan.cut_power_w if cut_power_w is None else cut_power_w
    return XciMeasurement(rx.snr_db, p_cut * 10 ** (-rx.snr_db / 10), rx)

