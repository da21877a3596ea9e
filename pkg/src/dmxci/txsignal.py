"""Pump-and-probe transmitter: PRBS data, DP-16-QAM, RRC shaping, predistortion.

The complex envelope follows the engineering convention: a baseband
component ``exp(+2j*pi*f*t)`` sits at optical frequency ``center_freq + f``.
Everything is periodic over the simulation window, so filters are applied
as exact circular (frequency-domain) operations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.constants import c as SPEED_OF_LIGHT

from .topology import CUT_FREQUENCY_HZ

# x^17 + x^14 + 1 and friends; maximal-length feedback taps per degree
PRBS_TAPS = {
    7: (7, 6),
    9: (9, 5),
    11: (11, 9),
    15: (15, 14),
    17: (17, 14),
    20: (20, 17),
    23: (23, 18),
    31: (31, 28),
}

# Gray code on one quadrature rail: bit pair -> amplitude level
_GRAY_LEVELS = {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3}
_LEVEL_TABLE = np.array([-3, -1, 3, 1], dtype=float)  # index = 2*b0 + b1


def dbm_to_w(p_dbm):
    return 1e-3 * 10 ** (np.asarray(p_dbm, dtype=float) / 10)


def w_to_dbm(p_w):
    return 10 * np.log10(np.asarray(p_w, dtype=float) / 1e-3)


@dataclass(frozen=True)
class ChannelPlan:
    """CUT (probe) plus a single pump on a fixed WDM grid.

    Frequencies and rates are in Hz / Bd, powers in dBm, dispersion in ps/nm.
    ``pump_power_dbm=None`` builds a CUT-only field.
    """

    cut_freq: float = CUT_FREQUENCY_HZ
    grid_spacing: float = 37.5e9
    pump_grid_multiple: int = 2
    baud_rate: float = 32e9
    cut_power_dbm: float = -20.0
    pump_power_dbm: float | None = 1.0
    predistortion_ps_nm: float = 102400.0
    rolloff: float = 0.1
    prbs_degree: int = 17

    def __post_init__(self):
        if self.baud_rate >= self.grid_spacing:
            raise ValueError("baud rate must be below the grid spacing")
        if not 0 <= self.rolloff <= 1:
            raise ValueError(f"rolloff must lie in [0, 1], got {self.rolloff}")
        if self.pump_grid_multiple == 0:
            raise ValueError("pump cannot sit on the CUT slot")

    @property
    def pump_offset(self) -> float:
        return self.pump_grid_multiple * self.grid_spacing

    @property
    def pump_freq(self) -> float:
        return self.cut_freq + self.pump_offset

    @property
    def has_pump(self) -> bool:
        return self.pump_power_dbm is not None and np.isfinite(self.pump_power_dbm)

    @property
    def center_freq(self) -> float:
        """Field center: midpoint of CUT and pump."""
        return self.cut_freq + 0.5 * self.pump_offset

    @property
    def cut_power_w(self) -> float:
        return float(dbm_to_w(self.cut_power_dbm))

    def with_pump_power(self, p_dbm: float | None) -> "ChannelPlan":
        return replace(self, pump_power_dbm=p_dbm)


@dataclass
class SampledField:
    """Dual-polarization complex envelope (sqrt(W)) on a uniform periodic grid.

    ``ref_freq`` is the carrier whose group velocity defines the retarded
    time frame; dispersion phases are quadratic about it.
    """

    x: np.ndarray
    y: np.ndarray
    sample_rate: float
    center_freq: float
    ref_freq: float | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=complex)
        self.y = np.asarray(self.y, dtype=complex)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("X and Y polarizations must be 1-D and equally long")
        if self.ref_freq is None:
            self.ref_freq = self.center_freq

    def __len__(self) -> int:
        return self.x.size

    @property
    def data(self) -> np.ndarray:
        """Stacked (2, N) view-copy of both polarizations."""
        return np.stack([self.x, self.y])

    @classmethod
    def from_array(cls, a: np.ndarray, like: "SampledField") -> "SampledField":
        return cls(a[0], a[1], like.sample_rate, like.center_freq, like.ref_freq)

    def copy(self) -> "SampledField":
        return SampledField(
            self.x.copy(), self.y.copy(), self.sample_rate, self.center_freq, self.ref_freq
        )

    def power_w(self) -> float:
        return float(np.mean(np.abs(self.x) ** 2 + np.abs(self.y) ** 2))

    def freqs(self) -> np.ndarray:
        """Baseband frequency of every FFT bin."""
        return sfft.fftfreq(len(self), 1 / self.sample_rate)

    def swapped(self) -> "SampledField":
        return SampledField(self.y.copy(), self.x.copy(), self.sample_rate, self.center_freq, self.ref_freq)

    def __add__(self, other: "SampledField") -> "SampledField":
        if (
            len(self) != len(other)
            or self.sample_rate != other.sample_rate
            or self.center_freq != other.center_freq
        ):
            raise ValueError("fields live on different grids")
        return SampledField(
            self.x + other.x, self.y + other.y, self.sample_rate, self.center_freq, self.ref_freq
        )


@dataclass
class SymbolReference:
    """Transmitted unit-energy symbols, per channel, shape (2, n_symbols)."""

    cut: np.ndarray
    pump: np.ndarray | None = None

    @property
    def n_symbols(self) -> int:
        return self.cut.shape[1]


# --------------------------------------------------------------------------
# data


def _lfsr_run(degree: int, seed: int, n_bits: int) -> tuple[np.ndarray, int]:
    try:
        a, b = PRBS_TAPS[degree]
    except KeyError:
        raise ValueError(f"no maximal-length taps tabulated for degree {degree}") from None
    mask = (1 << degree) - 1
    state = seed & mask
    if state == 0:
        raise ValueError("PRBS seed must be non-zero (all-zero state locks the LFSR)")
    out = np.empty(n_bits, dtype=np.uint8)
    sa, sb = a - 1, b - 1
    for k in range(n_bits):
        bit = ((state >> sa) ^ (state >> sb)) & 1
        state = ((state << 1) | bit) & mask
        out[k] = bit
    return out, state


@lru_cache(maxsize=32)
def _prbs_period(degree: int, seed: int) -> np.ndarray:
    bits, _ = _lfsr_run(degree, seed, (1 << degree) - 1)
    bits.setflags(write=False)
    return bits


def prbs(degree: int, seed: int, n_bits: int | None = None) -> np.ndarray:
    """Maximal-length LFSR bit sequence (Fibonacci form).

    Parameters
    ----------
    degree : int
        Register length; the sequence period is ``2**degree - 1``.
    seed : int
        Initial register state, must be non-zero.
    n_bits : int, optional
        Number of bits; defaults to one period. Longer requests wrap.
    """
    period = _prbs_period(degree, int(seed))
    if n_bits is None:
        return period.copy()
    reps = -(-n_bits // period.size)
    return np.tile(period, reps)[:n_bits]


def prbs_state_after(degree: int, seed: int, n_steps: int) -> int:
    """Register state after clocking ``n_steps`` bits from ``seed``."""
    n_steps %= (1 << degree) - 1
    _, state = _lfsr_run(degree, seed, n_steps)
    return state


def expand_seeds(master_seed: int, degree: int = 17, count: int = 4) -> tuple[int, ...]:
    """Derive ``count`` PRBS states from one master seed.

    The states are evenly spaced along the m-sequence so that the streams
    (CUT X/Y, pump X/Y) do not overlap over ``period / count`` bits.
    """
    period = (1 << degree) - 1
    rng = np.random.default_rng(master_seed)
    base = int(rng.integers(1, 1 << degree))
    spacing = period // count
    states, state = [], base
    for k in range(count):
        states.append(state)
        if k + 1 < count:
            state = prbs_state_after(degree, state, spacing)
    return tuple(states)


def map_qam16(bits) -> np.ndarray:
    """Gray-mapped 16-QAM with unit average energy.

    Each group of four bits ``b0 b1 b2 b3`` maps to ``(I + jQ)/sqrt(10)``
    with I from ``b0 b1`` and Q from ``b2 b3`` via 00->-3, 01->-1, 11->+1,
    10->+3. So ``0000`` is ``(-3-3j)/sqrt(10)``.
    """
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % 4:
        raise ValueError(f"bit count {bits.size} is not a multiple of 4")
    b = bits.reshape(-1, 4)
    i = _LEVEL_TABLE[2 * b[:, 0] + b[:, 1]]
    q = _LEVEL_TABLE[2 * b[:, 2] + b[:, 3]]
    return (i + 1j * q) / np.sqrt(10.0)


# --------------------------------------------------------------------------
# filters


def rrc_response(f, baud_rate: float, rolloff: float) -> np.ndarray:
    """Root-raised-cosine amplitude response, unity in the flat band."""
    af = np.abs(np.asarray(f, dtype=float))
    f1 = (1 - rolloff) * baud_rate / 2
    f2 = (1 + rolloff) * baud_rate / 2
    h = np.zeros_like(af)
    h[af <= f1] = 1.0
    if rolloff > 0:
        tr = (af > f1) & (af <= f2)
        h[tr] = np.sqrt(0.5 * (1 + np.cos(np.pi / (rolloff * baud_rate) * (af[tr] - f1))))
    return h


def dispersion_phase(f, acc_dispersion_ps_nm: float, f_ref: float) -> np.ndarray:
    """Phase (rad) of the all-pass dispersion filter at baseband offsets ``f``
    from the frame reference ``f_ref``."""
    lam = SPEED_OF_LIGHT / f_ref
    d_si = acc_dispersion_ps_nm * 1e-3  # ps/nm -> s/m
    return np.pi * lam**2 / SPEED_OF_LIGHT * d_si * np.asarray(f, dtype=float) ** 2


def frame_freqs(field: SampledField) -> np.ndarray:
    """FFT-bin frequencies measured from the field's frame reference."""
    return field.freqs() + (field.center_freq - field.ref_freq)


def apply_dispersion(field: SampledField, acc_dispersion_ps_nm: float) -> SampledField:
    """Apply accumulated chromatic dispersion as an exact all-pass filter.

    ``H(f) = exp(+1j*pi*lambda**2/c * D_acc * f**2)`` with ``f`` measured from
    ``field.ref_freq``; ``apply_dispersion(apply_dispersion(x, d), -d)`` is x.
    """
    if len(field) < 2:
        raise ValueError("field needs at least two samples")
    if acc_dispersion_ps_nm == 0:
        return field.copy()
    h = np.exp(1j * dispersion_phase(frame_freqs(field), acc_dispersion_ps_nm, field.ref_freq))
    spec = sfft.fft(field.data, axis=-1)
    spec *= h
    return SampledField.from_array(sfft.ifft(spec, axis=-1), field)


def simulation_sample_rate(plan: ChannelPlan) -> float:
    """Smallest power-of-two multiple of the baud rate covering twice the
    two-channel band."""
    need = 2 * (abs(plan.pump_offset) + (1 + plan.rolloff) * plan.baud_rate)
    sps = 1
    while sps * plan.baud_rate < need:
        sps *= 2
    return sps * plan.baud_rate


def _bin_shift(offset_freq: float, n: int, sample_rate: float) -> int:
    k = offset_freq * n / sample_rate
    kr = int(round(k))
    if abs(k - kr) > 1e-6:
        raise ValueError(
            f"offset {offset_freq:g} Hz is not on the FFT grid ({sample_rate / n:g} Hz bins)"
        )
    return kr


def shape_channel(
    symbols: np.ndarray,
    baud_rate: float,
    rolloff: float,
    offset_freq: float,
    power_dbm: float,
    sample_rate: float,
    *,
    predistortion_ps_nm: float = 0.0,
    ref_freq: float = CUT_FREQUENCY_HZ,
    center_freq: float = CUT_FREQUENCY_HZ,
) -> SampledField:
    """RRC-shaped dual-polarization channel placed at ``offset_freq``.

    ``symbols`` has shape (2, n_symbols). Predistortion is applied about the
    channel's own carrier before the frequency shift, and the result is
    scaled so that ``mean(|x|^2 + |y|^2)`` equals ``power_dbm``.
    """
    symbols = np.atleast_2d(np.asarray(symbols, dtype=complex))
    if symbols.shape[0] != 2:
        raise ValueError("symbols must have shape (2, n_symbols)")
    if (1 + rolloff) * baud_rate + 2 * abs(offset_freq) >= sample_rate:
        raise ValueError(
            "channel band exceeds the simulation bandwidth: "
            f"(1+rolloff)*R_s + 2|offset| = {(1 + rolloff) * baud_rate + 2 * abs(offset_freq):g} Hz "
            f">= sample rate {sample_rate:g} Hz"
        )
    sps_f = sample_rate / baud_rate
    sps = int(round(sps_f))
    if abs(sps - sps_f) > 1e-9:
        raise ValueError("sample rate must be an integer multiple of the baud rate")
    n_sym = symbols.shape[1]
    n = n_sym * sps

    # spectrum of the impulse train is the symbol spectrum repeated sps times
    spec = np.tile(sfft.fft(symbols, axis=-1), (1, sps))
    f = sfft.fftfreq(n, 1 / sample_rate)
    spec *= rrc_response(f, baud_rate, rolloff)
    if predistortion_ps_nm:
        spec *= np.exp(1j * dispersion_phase(f, predistortion_ps_nm, ref_freq))
    spec = np.roll(spec, _bin_shift(offset_freq, n, sample_rate), axis=-1)
    sig = sfft.ifft(spec, axis=-1)
    p = np.mean(np.sum(np.abs(sig) ** 2, axis=0))
    if p > 0:
        sig *= np.sqrt(dbm_to_w(power_dbm) / p)
    return SampledField(sig[0], sig[1], sample_rate, center_freq, ref_freq)


def build_wdm(
    plan: ChannelPlan,
    n_symbols: int,
    sample_rate: float | None = None,
    seeds: tuple[int, ...] | int = 1,
) -> tuple[SampledField, SymbolReference]:
    """Transmit field of CUT plus pump, and the reference symbols.

    ``seeds`` is either four PRBS states (CUT-X, CUT-Y, pump-X, pump-Y) or a
    master seed expanded by :func:`expand_seeds`.
    """
    if n_symbols < 2 or n_symbols & (n_symbols - 1):
        raise ValueError(f"n_symbols must be a power of two, got {n_symbols}")
    if sample_rate is None:
        sample_rate = simulation_sample_rate(plan)
    if isinstance(seeds, (int, np.integer)):
        seeds = expand_seeds(int(seeds), plan.prbs_degree, 4)
    if len(set(seeds)) != len(seeds):
        raise ValueError("polarizations and channels need distinct PRBS seeds")

    def symbols_for(sx, sy):
        return np.stack([map_qam16(prbs(plan.prbs_degree, s, 4 * n_symbols)) for s in (sx, sy)])

    center = plan.center_freq
    common = dict(
        predistortion_ps_nm=plan.predistortion_ps_nm, ref_freq=plan.cut_freq, center_freq=center
    )
    cut_sym = symbols_for(seeds[0], seeds[1])
    field = shape_channel(
        cut_sym, plan.baud_rate, plan.rolloff, plan.cut_freq - center,
        plan.cut_power_dbm, sample_rate, **common,
    )
    pump_sym = None
    if plan.has_pump:
        pump_sym = symbols_for(seeds[2], seeds[3])
        field = field + shape_channel(
            pump_sym, plan.baud_rate, plan.rolloff, plan.pump_freq - center,
            plan.pump_power_dbm, sample_rate, **common,
        )
    return field, SymbolReference(cut_sym, pump_sym)
