"""Amplitude clipping, in-band filtering, and clipping-noise extraction.

The clipped frame is tracked under both standard views: the additive one
(filtered tones = data tones + additive noise tones) and the attenuated one
(filtered tones = alpha * data tones + uncorrelated residual), with the
Bussgang attenuation alpha computed from the clipping ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import kernels
from .signal_core import (
    Constellation,
    FreqSymbols,
    TimeSignal,
    demodulate_inband_values,
    modulate_values,
    ofdm_modulate,
    unitary_idft,
)


@dataclass(frozen=True)
class ClipParams:
    """Clipping configuration: threshold = sigma * 10^(cr_db/20)."""

    cr_db: float
    sigma: float  # rms signal amplitude, sqrt(E_s)
    oversample: int = 1

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.oversample < 1:
            raise ValueError("oversample factor must be >= 1")

    @property
    def threshold(self) -> float:
        return self.sigma * 10.0 ** (self.cr_db / 20.0)

    @classmethod
    def for_constellation(
        cls, constellation: Constellation, cr_db: float, oversample: int = 1
    ) -> "ClipParams":
        return cls(cr_db, constellation.rms_amplitude, oversample)


@dataclass(frozen=True)
class ClippedFrame:
    """One clip-and-filter pass: clipped waveform plus both noise views.

    noise_time is the Nyquist-rate clipping noise (inverse unitary DFT of
    noise_freq); for oversample == 1 it is exactly zero off the clipped
    sample set, for oversample > 1 it is only nearly sparse.
    """

    clipped_signal: TimeSignal
    filtered_symbols: FreqSymbols
    noise_freq: FreqSymbols
    noise_time: np.ndarray
    clip_count: int


def clip(signal: TimeSignal, threshold: float) -> TimeSignal:
    """Limit every sample magnitude to threshold, preserving phase."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    clipped = kernels.clip_signal(signal.values, threshold)
    return TimeSignal(clipped, signal.oversample, signal.n_subcarriers)


def attenuation_alpha(cr_db) -> float:
    """Bussgang attenuation of a hard-clipped complex Gaussian signal."""
    gamma = 10.0 ** (np.asarray(cr_db, dtype=np.float64) / 20.0)
    alpha = 1.0 - np.exp(-(gamma**2)) + 0.5 * np.sqrt(np.pi) * gamma * erfc(gamma)
    return float(alpha) if np.ndim(cr_db) == 0 else alpha


def d_variance(cr_db: float, symbol_energy: float) -> float:
    """Per-tone variance of the attenuated-model residual at Nyquist clipping."""
    gamma_sq = 10.0 ** (cr_db / 10.0)
    alpha = attenuation_alpha(cr_db)
    return (1.0 - math.exp(-gamma_sq) - alpha**2) * symbol_energy


def filter_inband(
    clipped: TimeSignal, tones: FreqSymbols, params: ClipParams
) -> ClippedFrame:
    """Project a clipped waveform back onto the N in-band tones.

    For oversample == 1 the projection is the identity and the time-domain
    clipping noise is formed directly as (clipped - remodulated) so its
    off-support entries are exact zeros.
    """
    oversample = clipped.oversample
    reference = modulate_values(tones.values, oversample)
    clip_count = int(np.count_nonzero(np.abs(reference) > params.threshold))
    if oversample == 1:
        noise_time = clipped.values - reference
        filtered = tones.values + (np.fft.fft(noise_time) / math.sqrt(tones.n_subcarriers))
    else:
        filtered = demodulate_inband_values(clipped.values, oversample)
        noise_time = unitary_idft(filtered - tones.values)
    noise_freq = filtered - tones.values
    return ClippedFrame(
        clipped_signal=clipped,
        filtered_symbols=FreqSymbols(filtered, tones.n_subcarriers),
        noise_freq=FreqSymbols(noise_freq, tones.n_subcarriers),
        noise_time=noise_time,
        clip_count=clip_count,
    )


def clip_and_filter(tones: FreqSymbols, params: ClipParams) -> ClippedFrame:
    """Modulate, clip, and filter one frame (the transmitter-side pipeline)."""
    signal = ofdm_modulate(tones, params.oversample)
    return filter_inband(clip(signal, params.threshold), tones, params)


def transmit_filtered_signal(frame: ClippedFrame) -> TimeSignal:
    """Remodulate the filtered tones (the waveform actually sent when L > 1)."""
    return ofdm_modulate(frame.filtered_symbols, frame.clipped_signal.oversample)


def k_peak_values(values: np.ndarray, k: int) -> np.ndarray:
    """Array form of k_peak_reduction (no bookkeeping)."""
    mags = np.abs(values)
    order = np.argsort(-mags, kind="stable")  # ties: lower index first
    target = 0.8 * mags[order[k]]
    out = values.copy()
    top = order[:k]
    nonzero = top[mags[top] > 0.0]
    out[nonzero] = values[nonzero] * (target / mags[nonzero])
    return out


def k_peak_reduction(signal: TimeSignal, k: int):
    """Scale the k largest-magnitude samples down to 80% of the (k+1)-th.

    Nyquist-rate only; magnitude ties break toward the lower sample index.
    Returns (reduced signal, number of samples actually changed) - the implied
    clipping noise is exactly that sparse.
    """
    if signal.oversample != 1:
        raise ValueError("peak reduction operates on the Nyquist-rate signal")
    n = signal.values.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"peak count must satisfy 1 <= k < {n}")
    out = k_peak_values(signal.values, k)
    changed = int(np.count_nonzero(out != signal.values))
    return TimeSignal(out, 1, signal.n_subcarriers), changed
