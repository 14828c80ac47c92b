"""Clipped OFDM/OFDMA simulation with compressed-sensing noise cancellation.

The transmitter deliberately clips the OFDM waveform to contain its peak
power; the receiver reconstructs the (sparse) time-domain clipping noise by
orthogonal matching pursuit over compressed observations taken only on
reliably-decided data tones, then subtracts its spectrum before the final
symbol decisions.  The same machinery applies per user in interleaved OFDMA
through the radix-2 FFT stage structure.
"""

from .signal_core import (
    Constellation,
    FreqSymbols,
    TimeSignal,
    hard_decide,
    make_constellation,
    map_bits,
    ofdm_demodulate_inband,
    ofdm_modulate,
    papr_db,
    unitary_dft,
    unitary_idft,
)
from .clipper import (
    ClipParams,
    ClippedFrame,
    attenuation_alpha,
    clip,
    clip_and_filter,
    d_variance,
    filter_inband,
    k_peak_reduction,
    transmit_filtered_signal,
)
from .channel import ChannelModel, ebno_to_n0, equalize, transmit
from .cs_cancel import (
    CsProblem,
    OmpConfig,
    SparseEstimate,
    build_cs_problem,
    cancel_and_decide,
    largest_components,
    omp,
    rr_member,
    select_reliable,
)
from .ofdma import (
    FftFactorization,
    UserCsProblem,
    UserPartition,
    adjacent_select,
    build_factorization,
    build_user_cs_problem,
    fold_clipping_noise,
    interleaved_select,
    user_cancel_and_decide,
)
from .analytic import (
    AnalyticScenario,
    decision_error_given_rr,
    effective_n0,
    expected_m,
    p_correct_and_in_rr,
    p_in_rr_pam,
    p_in_rr_qam,
    q_function,
)
from .harness import (
    BerRecord,
    ConfigError,
    ExperimentConfig,
    run_analytic,
    run_ber,
    run_delta_sweep,
    validate,
)
from . import kernels

__version__ = "0.1.0"
