"""Constellations, OFDM (de)modulation with oversampling, PAPR, unitary DFT.

Conventions used throughout the package:
  * constellation levels are the odd integers (inter-point distance 2,
    no unit-energy normalization), so the rms symbol amplitude is sqrt(E_s)
    with E_s = 2 for QPSK and 10 for 16-QAM;
  * the frequency-domain transform is the unitary DFT (1/sqrt(N) scaling);
  * oversampling pads the tone vector with trailing zeros before the IDFT,
    and the time-domain signal keeps per-sample power E_s for every L.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

QPSK = "qpsk"
QAM16 = "16qam"

# Bit-group value -> per-dimension level (Gray labeling).
_GRAY_LEVELS = {
    2: np.array([1.0, -1.0]),
    4: np.array([3.0, 1.0, -3.0, -1.0]),
}
# Descending level tables and the matching per-level bit patterns.
_LEVELS_DESC = {
    2: np.array([1.0, -1.0]),
    4: np.array([3.0, 1.0, -1.0, -3.0]),
}
_LEVEL_BITS = {
    2: np.array([[0], [1]], dtype=np.int8),
    4: np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.int8),
}


@dataclass(frozen=True)
class Constellation:
    """Square QAM constellation with per-dimension Gray labeling."""

    scheme: str
    points: np.ndarray  # indexed by the integer value of the bit group
    bits_per_symbol: int
    pam_order: int  # levels per dimension (2 for QPSK, 4 for 16-QAM)

    @property
    def symbol_energy(self) -> float:
        # real**2 + imag**2 keeps integer-level energies exact (no sqrt round trip)
        return float(np.mean(self.points.real**2 + self.points.imag**2))

    @property
    def rms_amplitude(self) -> float:
        return float(np.sqrt(self.symbol_energy))

    @property
    def levels_desc(self) -> np.ndarray:
        return _LEVELS_DESC[self.pam_order]

    @property
    def level_bits(self) -> np.ndarray:
        return _LEVEL_BITS[self.pam_order]

    @classmethod
    def qpsk(cls) -> "Constellation":
        return _build(QPSK, 2)

    @classmethod
    def qam16(cls) -> "Constellation":
        return _build(QAM16, 4)


def _build(scheme: str, pam_order: int) -> Constellation:
    bits_per_dim = pam_order.bit_length() - 1
    bits_per_symbol = 2 * bits_per_dim
    gray = _GRAY_LEVELS[pam_order]
    points = np.empty(pam_order * pam_order, dtype=np.complex128)
    for g in range(points.size):
        re = gray[g >> bits_per_dim]
        im = gray[g & (pam_order - 1)]
        points[g] = re + 1j * im
    return Constellation(scheme, points, bits_per_symbol, pam_order)


def make_constellation(name: str) -> Constellation:
    key = name.strip().lower().replace("-", "")
    if key == QPSK:
        return Constellation.qpsk()
    if key in (QAM16, "qam16"):
        return Constellation.qam16()
    raise ValueError(f"unknown modulation {name!r} (expected qpsk or 16qam)")


@dataclass(frozen=True)
class FreqSymbols:
    """Length-N frequency-domain tone vector."""

    values: np.ndarray
    n_subcarriers: int

    def __post_init__(self):
        if self.values.shape[0] != self.n_subcarriers:
            raise ValueError("tone vector length does not match n_subcarriers")
        if not is_power_of_two(self.n_subcarriers):
            raise ValueError("n_subcarriers must be a power of two")


@dataclass(frozen=True)
class TimeSignal:
    """Length-L*N time-domain sample vector with its oversampling factor."""

    values: np.ndarray
    oversample: int
    n_subcarriers: int

    def __post_init__(self):
        if self.oversample < 1:
            raise ValueError("oversample factor must be >= 1")
        if self.values.shape[0] != self.oversample * self.n_subcarriers:
            raise ValueError("sample count does not equal oversample * n_subcarriers")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


# -- bit mapping -------------------------------------------------------------


def map_bits_values(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    bits = np.asarray(bits)
    bps = constellation.bits_per_symbol
    if bits.size % bps:
        raise ValueError(f"bit count {bits.size} is not a multiple of {bps}")
    groups = bits.reshape(-1, bps)
    weights = 1 << np.arange(bps - 1, -1, -1)
    idx = groups @ weights
    return constellation.points[idx]


def map_bits(bits: np.ndarray, constellation: Constellation, n_subcarriers: int) -> FreqSymbols:
    """Map a bit stream onto N tones (Gray labeling per dimension)."""
    bits = np.asarray(bits)
    if bits.size != n_subcarriers * constellation.bits_per_symbol:
        raise ValueError(
            f"expected {n_subcarriers * constellation.bits_per_symbol} bits, got {bits.size}"
        )
    return FreqSymbols(map_bits_values(bits, constellation), n_subcarriers)


def decide_values(values: np.ndarray, constellation: Constellation):
    """Minimum-distance decision for an array of received points.

    Returns (decided points, bits) with bits shaped (len(values), bits_per_symbol);
    exact boundary hits resolve to the smaller per-dimension level.
    """
    idx_re, idx_im = kernels.decide_level_indices(values, constellation.pam_order)
    levels = constellation.levels_desc
    points = levels[idx_re] + 1j * levels[idx_im]
    lut = constellation.level_bits
    bits = np.concatenate([lut[idx_re], lut[idx_im]], axis=1)
    return points, bits


def hard_decide(y: complex, constellation: Constellation):
    """Decide a single received value; returns (point, bits)."""
    points, bits = decide_values(np.array([y], dtype=np.complex128), constellation)
    return complex(points[0]), bits[0]


# -- OFDM (de)modulation -----------------------------------------------------


def modulate_values(tones: np.ndarray, oversample: int) -> np.ndarray:
    n = tones.shape[0]
    total = oversample * n
    # trailing zero padding; scaling keeps x(n) = (1/sqrt(N)) sum X(k) e^{j2pi kn/LN}
    return np.fft.ifft(tones, n=total) * (oversample * np.sqrt(n))


def ofdm_modulate(tones: FreqSymbols, oversample: int) -> TimeSignal:
    """Oversampled OFDM modulation of N tones onto L*N time samples."""
    if oversample < 1:
        raise ValueError("oversample factor must be >= 1")
    values = modulate_values(tones.values, oversample)
    return TimeSignal(values, oversample, tones.n_subcarriers)


def demodulate_inband_values(samples: np.ndarray, oversample: int) -> np.ndarray:
    n = samples.shape[0] // oversample
    return np.fft.fft(samples)[:n] / (oversample * np.sqrt(n))


def ofdm_demodulate_inband(signal: TimeSignal) -> FreqSymbols:
    """In-band tone coefficients of a (possibly oversampled) time signal.

    Exact left inverse of ofdm_modulate; for clipped inputs this is the
    out-of-band filtering step.
    """
    values = demodulate_inband_values(signal.values, signal.oversample)
    return FreqSymbols(values, signal.n_subcarriers)


def papr_db(signal: TimeSignal) -> float:
    """Peak-to-average power ratio in dB (sample mean for the average)."""
    power = np.abs(signal.values) ** 2
    mean = power.mean()
    if mean == 0.0:
        raise ValueError("PAPR is undefined for the all-zero signal")
    return float(10.0 * np.log10(power.max() / mean))


# -- unitary DFT -------------------------------------------------------------


def unitary_dft(v: np.ndarray) -> np.ndarray:
    """Unitary DFT (1/sqrt(N) scaling); length must be a power of two."""
    v = np.asarray(v)
    if not is_power_of_two(v.shape[0]):
        raise ValueError("unitary_dft requires a power-of-two length")
    return np.fft.fft(v) / np.sqrt(v.shape[0])


def unitary_idft(v: np.ndarray) -> np.ndarray:
    """Inverse of unitary_dft."""
    v = np.asarray(v)
    if not is_power_of_two(v.shape[0]):
        raise ValueError("unitary_idft requires a power-of-two length")
    return np.fft.ifft(v) * np.sqrt(v.shape[0])
