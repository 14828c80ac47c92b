"""Reliable-tone selection, compressed observations, OMP, and cancellation.

The receiver keeps only tones whose rescaled equalized value lands in the
reliable region (margin >= delta from every interior decision boundary),
subtracts the hard decisions there, and treats the result as compressed
observations of the time-domain clipping noise through a row-restricted
unitary DFT.  OMP reconstructs the noise, whose spectrum is then subtracted
before the final per-tone decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .signal_core import Constellation, FreqSymbols, decide_values


@dataclass(frozen=True)
class OmpConfig:
    """Iteration cap and component-magnitude floor for the greedy solver.

    max_iterations defaults (when None) to ceil(0.125 * ambient dimension).
    A reconstructed component whose magnitude falls below stop_threshold ends
    the iteration; the offending component is discarded.
    """

    max_iterations: int | None = None
    stop_threshold: float = 0.0

    def __post_init__(self):
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stop_threshold < 0:
            raise ValueError("stop_threshold must be >= 0")

    def resolved_iterations(self, n_ambient: int) -> int:
        if self.max_iterations is None:
            return math.ceil(0.125 * n_ambient)
        return self.max_iterations


@dataclass(frozen=True)
class CsProblem:
    """Compressed observations tied to the row set of the DFT they came from."""

    observations: np.ndarray  # length M
    selected_indices: np.ndarray  # strictly increasing, length M
    n_ambient: int  # dimension of the sparse unknown
    estimated_symbols: np.ndarray  # hard decisions on the selected tones

    @property
    def n_observations(self) -> int:
        return int(self.selected_indices.shape[0])


@dataclass(frozen=True)
class SparseEstimate:
    support: np.ndarray
    values: np.ndarray
    iterations_used: int


def rr_member(y: complex, constellation: Constellation, delta: float) -> bool:
    """Whether a single received value lies in the reliable region."""
    if not 0 <= delta < 1:
        raise ValueError("delta must satisfy 0 <= delta < 1")
    mask = kernels.reliable_mask(
        np.array([y], dtype=np.complex128), constellation.pam_order, delta
    )
    return bool(mask[0])


def select_reliable_values(
    equalized: np.ndarray, alpha: float, constellation: Constellation, delta: float
):
    """Array-level reliable-tone selection; returns (indices, decided points)."""
    scaled = equalized / alpha
    mask = kernels.reliable_mask(scaled, constellation.pam_order, delta)
    indices = np.flatnonzero(mask).astype(np.int64)
    decided, _ = decide_values(scaled[indices], constellation)
    return indices, decided


def select_reliable(
    equalized: FreqSymbols, alpha: float, constellation: Constellation, delta: float
):
    """Indices whose rescaled value lies in the reliable region, plus the
    hard decisions made there.  An empty selection is a legal outcome."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not 0 <= delta < 1:
        raise ValueError("delta must satisfy 0 <= delta < 1")
    return select_reliable_values(equalized.values, alpha, constellation, delta)


def build_cs_problem(
    equalized: FreqSymbols, indices: np.ndarray, decided: np.ndarray
) -> CsProblem:
    """Subtract the decided symbols on the selected tones to expose the
    clipping-noise observations."""
    indices = np.asarray(indices, dtype=np.int64)
    if decided.shape[0] != indices.shape[0]:
        raise ValueError("decided symbols must align with the selected indices")
    observations = equalized.values[indices] - decided
    return CsProblem(observations, indices, equalized.n_subcarriers, decided)


def omp(problem: CsProblem, config: OmpConfig) -> SparseEstimate:
    """Orthogonal matching pursuit on the row-restricted unitary DFT.

    Matrix-free: correlations are one scatter plus a full-size inverse FFT,
    and the least-squares refit is an incrementally updated QR.
    """
    if problem.n_observations < 1:
        raise ValueError("OMP needs at least one observation")
    max_iter = config.resolved_iterations(problem.n_ambient)
    support, values, used = kernels.omp_solve(
        problem.observations,
        problem.selected_indices,
        problem.n_ambient,
        max_iter,
        config.stop_threshold,
    )
    return SparseEstimate(support, values, used)


def largest_components_values(observations: np.ndarray, budget: int, stop_threshold: float):
    """Array form of largest_components; returns (support, values, kept)."""
    time_noise = kernels.fft_unitary(observations, inverse=True)
    mags = np.abs(time_noise)
    order = np.argsort(-mags, kind="stable")[:budget]
    keep = order[mags[order] >= max(stop_threshold, np.finfo(float).tiny)]
    keep = np.sort(keep).astype(np.int64)
    return keep, time_noise[keep], int(keep.size)


def largest_components(problem: CsProblem, config: OmpConfig) -> SparseEstimate:
    """Complete-observation shortcut: with every tone selected the inverse
    DFT of the observations is the noise itself, so keep its largest entries
    (at most max_iterations of them, each at least stop_threshold)."""
    if problem.n_observations != problem.n_ambient:
        raise ValueError("largest-components shortcut requires a full observation set")
    support, values, kept = largest_components_values(
        problem.observations,
        config.resolved_iterations(problem.n_ambient),
        config.stop_threshold,
    )
    return SparseEstimate(support, values, kept)


def noise_spectrum_values(support: np.ndarray, values: np.ndarray, n_ambient: int) -> np.ndarray:
    scatter = np.zeros(n_ambient, dtype=np.complex128)
    if support.size:
        scatter[support] = values
    return kernels.fft_unitary(scatter, inverse=False)


def noise_spectrum(estimate: SparseEstimate, n_ambient: int) -> np.ndarray:
    """Unitary DFT of the sparse time-domain estimate."""
    return noise_spectrum_values(estimate.support, estimate.values, n_ambient)


def cancel_and_decide(
    equalized: FreqSymbols, estimate: SparseEstimate, constellation: Constellation
):
    """Subtract the reconstructed noise spectrum and hard-decide every tone."""
    cleaned = equalized.values - noise_spectrum(estimate, equalized.n_subcarriers)
    return decide_values(cleaned, constellation)
