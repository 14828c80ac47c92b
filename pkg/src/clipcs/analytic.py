"""Closed-form decision statistics of the reliable-region receiver over AWGN.

All formulas assume Nyquist-rate clipping, where the per-tone clipping
residual is modeled as zero-mean complex Gaussian with the Bussgang variance,
independent of the data.  The per-dimension noise deviation is therefore
sqrt(N0'/2) with N0' the effective (rescaled) complex noise variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .clipper import attenuation_alpha, d_variance


def q_function(z):
    """Gaussian tail probability Q(z)."""
    return 0.5 * erfc(np.asarray(z, dtype=np.float64) / math.sqrt(2.0))


def effective_n0(cr_db: float, noise_var: float, symbol_energy: float) -> float:
    """Variance of the rescaled clipping-plus-channel noise per tone."""
    alpha = attenuation_alpha(cr_db)
    return (d_variance(cr_db, symbol_energy) + noise_var) / alpha**2


def p_in_rr_pam(pam_order: int, delta: float, n0_eff: float) -> float:
    """Probability that one coordinate of a rescaled received tone lands in
    the reliable region, for V-PAM levels at inter-point distance 2.

    Implemented as the literal nested Q-function sums (average over the V/2
    symmetric level pairs); the inner sum is empty for V = 2.
    """
    _check_rr_args(pam_order, delta)
    v = pam_order
    s = math.sqrt(n0_eff / 2.0)
    total = 0.0
    for vi in range(0, (v - 2) // 2 + 1):
        term = float(q_function((2 * vi - 1 + v + delta) / s))
        term += float(q_function((-2 * vi - 3 + v + delta) / s))
        for vp in range(0, v - 2):
            term += float(q_function((-2 * vi + 2 * vp + 1 - v + delta) / s))
            term -= float(q_function((-2 * vi + 2 * vp + 3 - v - delta) / s))
        total += term
    return 2.0 / v * total


def p_in_rr_qam(pam_order: int, delta: float, n0_eff: float) -> float:
    """Joint (both-coordinate) reliable-region probability for square QAM."""
    return p_in_rr_pam(pam_order, delta, n0_eff) ** 2


def p_correct_and_in_rr(pam_order: int, delta: float, n0_eff: float) -> float:
    """Probability that a tone is decided correctly and lies in the reliable
    region; equals the correct-decision probability at inter-point distance
    2 - 2*delta."""
    _check_rr_args(pam_order, delta)
    v = pam_order
    q = float(q_function((1.0 - delta) / math.sqrt(n0_eff / 2.0)))
    return (1.0 - 2.0 * (v - 1) / v * q) ** 2


def decision_error_given_rr(pam_order: int, delta: float, n0_eff: float) -> float:
    """Symbol-decision error probability conditioned on reliable-region
    membership."""
    p_rr = p_in_rr_qam(pam_order, delta, n0_eff)
    if p_rr <= 0.0:
        raise ValueError("reliable-region probability is zero; conditioning undefined")
    return 1.0 - p_correct_and_in_rr(pam_order, delta, n0_eff) / p_rr


def expected_m(n_tones: int, pam_order: int, delta: float, n0_eff: float) -> float:
    """Expected number of compressed observations (reliable tones)."""
    return n_tones * p_in_rr_qam(pam_order, delta, n0_eff)


def _check_rr_args(pam_order: int, delta: float) -> None:
    if pam_order < 2 or pam_order % 2:
        raise ValueError("pam_order must be an even integer >= 2")
    if not 0 <= delta < 1:
        raise ValueError("delta must satisfy 0 <= delta < 1")


@dataclass(frozen=True)
class AnalyticScenario:
    """One operating point of the closed-form expressions."""

    pam_order: int
    delta: float
    cr_db: float
    noise_var: float
    symbol_energy: float

    @property
    def effective_noise_var(self) -> float:
        return effective_n0(self.cr_db, self.noise_var, self.symbol_energy)

    def row(self, n_tones: int) -> dict:
        n0_eff = self.effective_noise_var
        return {
            "delta": self.delta,
            "cr_db": self.cr_db,
            "noise_var": self.noise_var,
            "effective_n0": n0_eff,
            "p_in_rr": p_in_rr_qam(self.pam_order, self.delta, n0_eff),
            "p_error_given_rr": decision_error_given_rr(self.pam_order, self.delta, n0_eff),
            "expected_m": expected_m(n_tones, self.pam_order, self.delta, n0_eff),
        }
