"""Frequency-domain channel, AWGN injection, and zero-forcing equalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import Constellation, FreqSymbols


@dataclass(frozen=True)
class ChannelModel:
    """Per-tone frequency response plus AWGN variance per tone."""

    response: np.ndarray
    noise_var: float

    def __post_init__(self):
        if self.noise_var < 0:
            raise ValueError("noise variance must be non-negative")
        if np.any(self.response == 0):
            raise ValueError("channel response must be nonzero on every tone")

    @classmethod
    def awgn(cls, n_subcarriers: int, noise_var: float) -> "ChannelModel":
        return cls(np.ones(n_subcarriers, dtype=np.complex128), noise_var)


def complex_awgn(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian draws with E|z|^2 = variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def transmit(tones: FreqSymbols, channel: ChannelModel, rng: np.random.Generator) -> FreqSymbols:
    """Apply the per-tone response and add complex AWGN of the model variance."""
    noisy = channel.response * tones.values + complex_awgn(
        rng, tones.n_subcarriers, channel.noise_var
    )
    return FreqSymbols(noisy, tones.n_subcarriers)


def equalize(received: FreqSymbols, channel: ChannelModel) -> FreqSymbols:
    """Zero-forcing equalization (divide out the known response)."""
    if np.any(channel.response == 0):
        raise ValueError("cannot equalize a channel with zero response entries")
    return FreqSymbols(received.values / channel.response, received.n_subcarriers)


def ebno_to_n0(ebno_db: float, constellation: Constellation) -> float:
    """Per-tone noise variance for a given Eb/N0, referenced to the unclipped
    symbol energy."""
    ebno = 10.0 ** (ebno_db / 10.0)
    return constellation.symbol_energy / (constellation.bits_per_symbol * ebno)
