"""Radix-2 decimation-in-frequency stages and interleaved user partitions.

An N-point unitary DFT factors into b = log2(N) butterfly stages followed by
a bit-reversal reordering.  After the first U stages the computation splits
into 2^U independent blocks, so a user holding every 2^U-th tone can fold the
length-N clipping noise into a length-N/2^U problem against the smaller DFT:
the fold applies the first U stages and keeps that user's contiguous block.

Each stage here carries a 1/sqrt(2) factor so that every stage is unitary on
its own and the composite matches the unitary DFT exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import (
    Constellation,
    FreqSymbols,
    decide_values,
    is_power_of_two,
)
from .cs_cancel import (
    CsProblem,
    SparseEstimate,
    build_cs_problem,
    noise_spectrum,
    select_reliable_values,
)

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def bit_reverse(value: int, bits: int) -> int:
    out = 0
    for _ in range(bits):
        out = (out << 1) | (value & 1)
        value >>= 1
    return out


@dataclass(frozen=True)
class FftFactorization:
    """Stage-by-stage view of the unitary DFT: ordering o stage_b ... stage_1."""

    n: int

    def __post_init__(self):
        if not is_power_of_two(self.n):
            raise ValueError("factorization requires a power-of-two length")

    @property
    def n_stages(self) -> int:
        return self.n.bit_length() - 1

    @property
    def ordering(self) -> np.ndarray:
        """Permutation p with (ordered output)[k] = (stage output)[p[k]]."""
        b = self.n_stages
        return np.array([bit_reverse(k, b) for k in range(self.n)], dtype=np.int64)

    def apply_stage(self, v: np.ndarray, stage: int, twiddle_sign: float = -1.0) -> np.ndarray:
        """Apply butterfly stage `stage` (1 = widest span) to a length-n vector."""
        if not 1 <= stage <= self.n_stages:
            raise ValueError(f"stage must be in 1..{self.n_stages}")
        block = self.n >> (stage - 1)
        half = block // 2
        out = np.asarray(v, dtype=np.complex128).copy()
        twiddle = np.exp(twiddle_sign * 2j * np.pi * np.arange(half) / block)
        for start in range(0, self.n, block):
            top = out[start : start + half].copy()
            bot = out[start + half : start + block].copy()
            out[start : start + half] = (top + bot) * _INV_SQRT2
            out[start + half : start + block] = (top - bot) * twiddle * _INV_SQRT2
        return out

    def apply_stages(self, v: np.ndarray, first: int = 1, last: int | None = None) -> np.ndarray:
        if last is None:
            last = self.n_stages
        out = np.asarray(v, dtype=np.complex128)
        for stage in range(first, last + 1):
            out = self.apply_stage(out, stage)
        return out

    def transform(self, v: np.ndarray) -> np.ndarray:
        """All stages plus the reordering; equals the unitary DFT."""
        staged = self.apply_stages(v)
        return staged[self.ordering]


def build_factorization(n: int) -> FftFactorization:
    if not is_power_of_two(n):
        raise ValueError("n must be a power of two")
    return FftFactorization(n)


def interleaved_indices(user: int, users_log2: int, n: int) -> np.ndarray:
    """Tone positions owned by `user` under interleaved allocation."""
    step = 1 << users_log2
    _check_partition(user, users_log2, n)
    return np.arange(user, n, step, dtype=np.int64)


def adjacent_indices(user: int, users_log2: int, n: int) -> np.ndarray:
    """Positions selected in the intermediate (post stage-U) domain.

    Equals the interleaved selection conjugated by the two reorderings; the
    result is the contiguous block of length n/2^U starting at
    bit_reverse(user) * n/2^U.
    """
    _check_partition(user, users_log2, n)
    size = n >> users_log2
    start = bit_reverse(user, users_log2) * size
    return np.arange(start, start + size, dtype=np.int64)


def _check_partition(user: int, users_log2: int, n: int) -> None:
    if users_log2 < 0:
        raise ValueError("users_log2 must be >= 0")
    if not 0 <= user < (1 << users_log2):
        raise ValueError(f"user must be in 0..{(1 << users_log2) - 1}")
    if not is_power_of_two(n) or n < (1 << users_log2):
        raise ValueError("n must be a power of two with at least 2^U entries")


def interleaved_select(user: int, users_log2: int, v: np.ndarray) -> np.ndarray:
    """Pick entries user, user + 2^U, ... (order preserved)."""
    v = np.asarray(v)
    return v[interleaved_indices(user, users_log2, v.shape[0])]


def adjacent_select(user: int, users_log2: int, v: np.ndarray) -> np.ndarray:
    """Pick the user's contiguous block in the intermediate index domain."""
    v = np.asarray(v)
    return v[adjacent_indices(user, users_log2, v.shape[0])]


@dataclass(frozen=True)
class UserPartition:
    """Index bookkeeping for one user of an interleaved 2^U-user layout."""

    n: int
    users_log2: int
    user: int
    interleaved: np.ndarray
    adjacent: np.ndarray
    factorization: FftFactorization

    @classmethod
    def build(cls, n: int, user: int, users_log2: int) -> "UserPartition":
        return cls(
            n=n,
            users_log2=users_log2,
            user=user,
            interleaved=interleaved_indices(user, users_log2, n),
            adjacent=adjacent_indices(user, users_log2, n),
            factorization=build_factorization(n),
        )


def fold_clipping_noise(
    noise_time: np.ndarray, user: int, users_log2: int, factorization: FftFactorization
) -> np.ndarray:
    """Fold the length-N clipping noise into the user's length-N/2^U problem.

    Applies the first U butterfly stages and keeps the user's block; the
    composite map has one nonzero per input coordinate, so sparsity can only
    shrink.  The folded vector c' satisfies F' c' = (F c) restricted to the
    user's interleaved tones.
    """
    staged = factorization.apply_stages(noise_time, 1, users_log2)
    return adjacent_select(user, users_log2, staged)


@dataclass(frozen=True)
class UserCsProblem:
    """Reduced-dimension CS problem for one user plus its tone positions."""

    user: int
    users_log2: int
    user_tones: np.ndarray  # positions in the full-N tone grid
    problem: CsProblem  # ambient dimension n / 2^U


def build_user_cs_problem(
    equalized: FreqSymbols,
    user: int,
    users_log2: int,
    alpha: float,
    constellation: Constellation,
    delta: float,
) -> UserCsProblem:
    """Restrict to the user's interleaved tones and build the reduced problem
    against the N/2^U-point unitary DFT."""
    n = equalized.n_subcarriers
    tones = interleaved_indices(user, users_log2, n)
    user_values = equalized.values[tones]
    indices, decided = select_reliable_values(user_values, alpha, constellation, delta)
    reduced = build_cs_problem(
        FreqSymbols(user_values, n >> users_log2), indices, decided
    )
    return UserCsProblem(user, users_log2, tones, reduced)


def user_cancel_and_decide(
    equalized: FreqSymbols,
    user: int,
    users_log2: int,
    estimate: SparseEstimate,
    constellation: Constellation,
):
    """Subtract the reconstructed folded noise on the user's tones and decide."""
    tones = interleaved_indices(user, users_log2, equalized.n_subcarriers)
    user_values = equalized.values[tones]
    cleaned = user_values - noise_spectrum(estimate, user_values.shape[0])
    return decide_values(cleaned, constellation)
