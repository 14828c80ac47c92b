"""Seeded Monte Carlo BER experiments, delta sweeps, and self-validation.

Reproducibility: every frame draws from its own counter-based stream keyed by
(master_seed, grid-point index, frame index), and all per-point accumulators
are integers, so results are byte-identical for any worker count or task
scheduling.  Adaptive stopping is evaluated on fixed batch boundaries for the
same reason.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .analytic import AnalyticScenario
from .channel import complex_awgn, ebno_to_n0
from .clipper import attenuation_alpha, k_peak_values
from .cs_cancel import (
    largest_components_values,
    noise_spectrum_values,
    select_reliable_values,
)
from .signal_core import (
    Constellation,
    decide_values,
    demodulate_inband_values,
    is_power_of_two,
    make_constellation,
    map_bits_values,
    modulate_values,
    unitary_dft,
)
from . import ofdma as ofdma_mod

CSV_HEADER = "ebno_db,bits,bit_errors,ber,mean_M,mean_omp_iters,frames"
SWEEP_CSV_HEADER = "delta," + CSV_HEADER

CLIP_MODES = ("nyquist_clip", "clip_and_filter", "k_peak_reduction", "none")

_BATCH_TARGET_BITS = 131072  # stopping-rule granularity, fixed for determinism
_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid experiment configuration; carries every violated constraint."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid experiment config: " + "; ".join(self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    n_subcarriers: int = 64
    modulation: str = "qpsk"
    oversample: int = 1
    clip_mode: str = "nyquist_clip"
    peak_count: int = 4  # K for k_peak_reduction mode
    cr_db: float = 0.0
    delta: float = 0.4
    omp_max_iterations: int | None = None  # default: ceil(0.125 * dimension)
    omp_stop_threshold: float = 0.05  # relative to the clip amplitude
    cancel: bool = True
    idft_shortcut: bool = True  # at delta=0, skip OMP for the largest-components rule
    ofdma_users_log2: int = 0  # U; 0 means plain OFDM
    ofdma_user: int = 0
    ebno_grid_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    min_bits: int = 100_000
    max_bits: int = 1_000_000
    target_errors: int = 100
    master_seed: int = 20240901

    def validate(self) -> None:
        bad = []
        if not is_power_of_two(self.n_subcarriers) or self.n_subcarriers < 2:
            bad.append("n_subcarriers must be a power of two >= 2")
        try:
            make_constellation(self.modulation)
        except ValueError as exc:
            bad.append(str(exc))
        if self.oversample < 1:
            bad.append("oversample must be >= 1")
        if self.clip_mode not in CLIP_MODES:
            bad.append(f"clip_mode must be one of {CLIP_MODES}")
        if self.clip_mode == "nyquist_clip" and self.oversample != 1:
            bad.append("nyquist_clip requires oversample = 1")
        if self.clip_mode == "clip_and_filter" and self.oversample < 2:
            bad.append("clip_and_filter requires oversample >= 2")
        if self.clip_mode == "k_peak_reduction":
            if self.oversample != 1:
                bad.append("k_peak_reduction requires oversample = 1")
            if not 1 <= self.peak_count < self.n_subcarriers:
                bad.append("peak_count must satisfy 1 <= K < n_subcarriers")
        if not 0 <= self.delta < 1:
            bad.append("delta must satisfy 0 <= delta < 1")
        if self.omp_max_iterations is not None and self.omp_max_iterations < 1:
            bad.append("omp_max_iterations must be >= 1")
        if self.omp_stop_threshold < 0:
            bad.append("omp_stop_threshold must be >= 0")
        if self.ofdma_users_log2 < 0:
            bad.append("ofdma_users_log2 must be >= 0")
        elif (1 << self.ofdma_users_log2) > self.n_subcarriers:
            bad.append("n_subcarriers must be divisible by the user count")
        elif not 0 <= self.ofdma_user < (1 << self.ofdma_users_log2):
            bad.append("ofdma_user out of range for the user count")
        if len(self.ebno_grid_db) == 0:
            bad.append("ebno_grid_db must not be empty")
        if self.min_bits < 1 or self.max_bits < self.min_bits:
            bad.append("need 1 <= min_bits <= max_bits")
        if self.target_errors < 1:
            bad.append("target_errors must be >= 1")
        if self.master_seed < 0:
            bad.append("master_seed must be >= 0")
        if bad:
            raise ConfigError(bad)

    @property
    def bits_per_frame(self) -> int:
        """Counted (per-user) bits per simulated frame."""
        const = make_constellation(self.modulation)
        return (self.n_subcarriers >> self.ofdma_users_log2) * const.bits_per_symbol


@dataclass(frozen=True)
class BerRecord:
    ebno_db: float
    bits_simulated: int
    bit_errors: int
    ber: float
    mean_selected_tones: float  # mean compressed-observation count per frame
    mean_omp_iterations: float
    frames: int
    frames_no_selection: int = 0  # frames decided without cancellation (M = 0)


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def record_csv_line(record: BerRecord) -> str:
    return ",".join(
        [
            _fmt(record.ebno_db),
            str(record.bits_simulated),
            str(record.bit_errors),
            _fmt(record.ber),
            _fmt(record.mean_selected_tones),
            _fmt(record.mean_omp_iterations),
            str(record.frames),
        ]
    )


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    lines.extend(record_csv_line(r) for r in records)
    return "\n".join(lines) + "\n"


def sweep_to_csv(sweep_rows) -> str:
    """sweep_rows: iterable of (delta, record)."""
    lines = [SWEEP_CSV_HEADER]
    for delta, record in sweep_rows:
        lines.append(_fmt(delta) + "," + record_csv_line(record))
    return "\n".join(lines) + "\n"


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: requested or hardware parallelism, capped by CLIPCS_THREADS."""
    cap_env = os.environ.get("CLIPCS_THREADS", "").strip()
    workers = requested if requested else (os.cpu_count() or 1)
    if cap_env:
        workers = min(workers, max(1, int(cap_env)))
    return max(1, workers)


# ---------------------------------------------------------------------------
# per-frame pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _PointRuntime:
    const: Constellation
    n: int
    oversample: int
    mode: str
    clip_threshold: float
    alpha: float
    peak_count: int
    noise_var: float
    stop_abs: float
    max_iterations: int
    delta: float
    cancel: bool
    shortcut: bool
    user_step: int  # 2^U (1 for plain OFDM)
    user: int
    dim: int  # ambient dimension of the CS problem

    @classmethod
    def build(cls, cfg: ExperimentConfig, ebno_db: float) -> "_PointRuntime":
        const = make_constellation(cfg.modulation)
        sigma = const.rms_amplitude
        clipped_mode = cfg.clip_mode in ("nyquist_clip", "clip_and_filter")
        threshold = sigma * 10.0 ** (cfg.cr_db / 20.0) if clipped_mode else 0.0
        alpha = attenuation_alpha(cfg.cr_db) if clipped_mode else 1.0
        dim = cfg.n_subcarriers >> cfg.ofdma_users_log2
        if cfg.omp_max_iterations is not None:
            max_iter = cfg.omp_max_iterations
        elif cfg.clip_mode == "k_peak_reduction":
            max_iter = cfg.peak_count
        else:
            max_iter = math.ceil(0.125 * dim)
        reference_amp = threshold if clipped_mode else sigma
        return cls(
            const=const,
            n=cfg.n_subcarriers,
            oversample=cfg.oversample,
            mode=cfg.clip_mode,
            clip_threshold=threshold,
            alpha=alpha,
            peak_count=cfg.peak_count,
            noise_var=ebno_to_n0(ebno_db, const),
            stop_abs=cfg.omp_stop_threshold * reference_amp,
            max_iterations=max_iter,
            delta=cfg.delta,
            cancel=cfg.cancel and cfg.clip_mode != "none",
            shortcut=cfg.idft_shortcut,
            user_step=1 << cfg.ofdma_users_log2,
            user=cfg.ofdma_user,
            dim=dim,
        )


def _frame_rng(master_seed: int, point_index: int, frame_index: int) -> np.random.Generator:
    key = np.array(
        [master_seed & _MASK64, ((point_index << 40) | frame_index) & _MASK64],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def _run_frame(rt: _PointRuntime, rng: np.random.Generator):
    const = rt.const
    tx_bits = rng.integers(0, 2, rt.n * const.bits_per_symbol, dtype=np.int8)
    tones = map_bits_values(tx_bits, const)

    if rt.mode == "none":
        sent = tones
    elif rt.mode == "k_peak_reduction":
        reduced = k_peak_values(modulate_values(tones, 1), rt.peak_count)
        sent = demodulate_inband_values(reduced, 1)
    else:
        wave = modulate_values(tones, rt.oversample)
        clipped = kernels.clip_signal(wave, rt.clip_threshold)
        sent = demodulate_inband_values(clipped, rt.oversample)

    equalized = sent + complex_awgn(rng, rt.n, rt.noise_var)

    if rt.user_step > 1:
        work = equalized[rt.user :: rt.user_step]
        ref_bits = tx_bits.reshape(rt.n, const.bits_per_symbol)[
            rt.user :: rt.user_step
        ].ravel()
    else:
        work = equalized
        ref_bits = tx_bits

    selected = 0
    iterations = 0
    if rt.cancel:
        sel, decided = select_reliable_values(work, rt.alpha, const, rt.delta)
        selected = int(sel.size)
        if selected:
            observations = work[sel] - decided
            if rt.delta == 0.0 and rt.shortcut and selected == rt.dim:
                support, values, iterations = largest_components_values(
                    observations, rt.max_iterations, rt.stop_abs
                )
            else:
                support, values, iterations = kernels.omp_solve(
                    observations, sel, rt.dim, rt.max_iterations, rt.stop_abs
                )
            if support.size:
                work = work - noise_spectrum_values(support, values, rt.dim)

    _, decided_bits = decide_values(work, const)
    errors = int(np.count_nonzero(decided_bits.ravel() != ref_bits))
    return errors, int(ref_bits.size), selected, int(iterations)


def _simulate_frames(cfg: ExperimentConfig, point_index: int, ebno_db: float,
                     start_frame: int, n_frames: int):
    """Worker task: simulate a contiguous frame range, return integer tallies."""
    rt = _PointRuntime.build(cfg, ebno_db)
    errors = bits = sum_selected = sum_iterations = no_selection = 0
    for frame in range(start_frame, start_frame + n_frames):
        rng = _frame_rng(cfg.master_seed, point_index, frame)
        e, b, m, it = _run_frame(rt, rng)
        errors += e
        bits += b
        sum_selected += m
        sum_iterations += it
        if rt.cancel and m == 0:
            no_selection += 1
    return errors, bits, sum_selected, sum_iterations, n_frames, no_selection


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------


def _pool_context():
    methods = mp.get_all_start_methods()
    return mp.get_context("fork" if "fork" in methods else "spawn")


def _simulate_point(cfg, point_index, ebno_db, pool, workers):
    bits_per_frame = cfg.bits_per_frame
    batch = max(1, math.ceil(_BATCH_TARGET_BITS / bits_per_frame))
    errors = bits = sum_selected = sum_iterations = frames = no_selection = 0
    while True:
        if bits >= cfg.max_bits:
            break
        if bits >= cfg.min_bits and errors >= cfg.target_errors:
            break
        remaining = math.ceil((cfg.max_bits - bits) / bits_per_frame)
        n_frames = min(batch, remaining)
        if pool is None:
            results = [_simulate_frames(cfg, point_index, ebno_db, frames, n_frames)]
        else:
            chunk = math.ceil(n_frames / workers)
            tasks = []
            offset = 0
            while offset < n_frames:
                count = min(chunk, n_frames - offset)
                tasks.append((cfg, point_index, ebno_db, frames + offset, count))
                offset += count
            results = pool.starmap(_simulate_frames, tasks)
        for e, b, m, it, f, z in results:
            errors += e
            bits += b
            sum_selected += m
            sum_iterations += it
            frames += f
            no_selection += z
    return BerRecord(
        ebno_db=ebno_db,
        bits_simulated=bits,
        bit_errors=errors,
        ber=errors / bits,
        mean_selected_tones=sum_selected / frames,
        mean_omp_iterations=sum_iterations / frames,
        frames=frames,
        frames_no_selection=no_selection,
    )


def run_ber(cfg: ExperimentConfig, workers: int | None = None):
    """Simulate every Eb/N0 grid point; returns one BerRecord per point."""
    cfg.validate()
    workers = resolve_workers(workers)
    kernels.warm_up()  # compile before forking so children inherit the jit state
    pool = None
    try:
        if workers > 1:
            pool = _pool_context().Pool(workers)
        return [
            _simulate_point(cfg, pt, float(ebno), pool, workers)
            for pt, ebno in enumerate(cfg.ebno_grid_db)
        ]
    finally:
        if pool is not None:
            pool.close()
            pool.join()


def run_delta_sweep(cfg: ExperimentConfig, deltas, workers: int | None = None):
    """run_ber once per margin value; frames are paired across arms because
    the per-frame random draws do not depend on delta."""
    rows = []
    for delta in deltas:
        for record in run_ber(replace(cfg, delta=float(delta)), workers):
            rows.append((float(delta), record))
    return rows


def run_analytic(constellation: Constellation, cr_db: float, ebno_grid_db,
                 deltas, n_tones: int):
    """Closed-form table over the (Eb/N0, delta) grid."""
    rows = []
    for ebno in ebno_grid_db:
        noise_var = ebno_to_n0(float(ebno), constellation)
        for delta in deltas:
            scenario = AnalyticScenario(
                pam_order=constellation.pam_order,
                delta=float(delta),
                cr_db=cr_db,
                noise_var=noise_var,
                symbol_energy=constellation.symbol_energy,
            )
            row = scenario.row(n_tones)
            row["ebno_db"] = float(ebno)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# validation suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def validate(perturb: str | None = None):
    """Run the invariant suite; returns a list of CheckResult.

    perturb='twiddle-sign' flips the butterfly twiddle sign in the
    factorization check (negative control: that check must then fail).
    """
    checks = []
    rng = np.random.default_rng(90210)

    # factorization identity
    twiddle_sign = 1.0 if perturb == "twiddle-sign" else -1.0
    worst = 0.0
    for n in (8, 64, 512):
        fact = ofdma_mod.build_factorization(n)
        ordering = fact.ordering
        for _ in range(100):
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            staged = v
            for stage in range(1, fact.n_stages + 1):
                staged = fact.apply_stage(staged, stage, twiddle_sign)
            err = np.linalg.norm(staged[ordering] - unitary_dft(v)) / np.linalg.norm(v)
            worst = max(worst, err)
    checks.append(
        CheckResult("fft-factorization-identity", worst < 1e-10, f"max rel err {worst:.3e}")
    )

    # partition permutation identity (exact index equality)
    ok = True
    for users_log2 in (1, 2):
        n = 64
        fact = ofdma_mod.build_factorization(n)
        reduced = ofdma_mod.build_factorization(n >> users_log2)
        for user in range(1 << users_log2):
            lhs = fact.ordering[ofdma_mod.interleaved_indices(user, users_log2, n)]
            rhs = ofdma_mod.adjacent_indices(user, users_log2, n)[reduced.ordering]
            ok = ok and bool(np.array_equal(lhs, rhs))
    checks.append(CheckResult("partition-permutation-identity", ok, "exact index maps"))

    # stage commutation identity
    worst = 0.0
    n = 64
    users_log2 = 2
    fact = ofdma_mod.build_factorization(n)
    reduced = ofdma_mod.build_factorization(n >> users_log2)
    for user in range(1 << users_log2):
        for _ in range(20):
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            lhs = ofdma_mod.adjacent_select(
                user, users_log2, fact.apply_stages(v, users_log2 + 1)
            )
            rhs = reduced.apply_stages(ofdma_mod.adjacent_select(user, users_log2, v))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    checks.append(
        CheckResult("stage-commutation-identity", worst < 1e-12, f"max abs err {worst:.3e}")
    )

    # modulation round trip and decimation
    const = make_constellation("qpsk")
    worst_rt = worst_dec = 0.0
    for oversample in (1, 4):
        for _ in range(20):
            bits = rng.integers(0, 2, 64 * 2, dtype=np.int8)
            tones = map_bits_values(bits, const)
            wave = modulate_values(tones, oversample)
            back = demodulate_inband_values(wave, oversample)
            worst_rt = max(worst_rt, float(np.max(np.abs(back - tones))))
            if oversample > 1:
                nyq = modulate_values(tones, 1)
                worst_dec = max(worst_dec, float(np.max(np.abs(wave[::oversample] - nyq))))
    checks.append(
        CheckResult(
            "modulation-round-trip",
            worst_rt < 1e-12 and worst_dec < 1e-12,
            f"round-trip {worst_rt:.3e}, decimation {worst_dec:.3e}",
        )
    )

    # exact Nyquist-rate sparsity
    from .clipper import ClipParams, clip_and_filter
    from .signal_core import FreqSymbols

    params = ClipParams.for_constellation(const, 0.0, 1)
    worst_off = 0.0
    for _ in range(100):
        bits = rng.integers(0, 2, 64 * 2, dtype=np.int8)
        tones = FreqSymbols(map_bits_values(bits, const), 64)
        frame = clip_and_filter(tones, params)
        over = np.abs(modulate_values(tones.values, 1)) > params.threshold
        off = np.abs(frame.noise_time[~over])
        if off.size:
            worst_off = max(worst_off, float(off.max()))
    checks.append(
        CheckResult("nyquist-exact-sparsity", worst_off < 1e-10, f"max off-support {worst_off:.3e}")
    )

    # OMP noiseless recovery
    recovered = 0
    trials = 20
    for _ in range(trials):
        support = rng.choice(64, size=4, replace=False)
        truth = np.zeros(64, dtype=np.complex128)
        truth[support] = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        rows = np.sort(rng.choice(64, size=32, replace=False)).astype(np.int64)
        observations = unitary_dft(truth)[rows]
        est_support, est_values, _ = kernels.omp_solve(observations, rows, 64, 4, 0.0)
        estimate = np.zeros(64, dtype=np.complex128)
        estimate[est_support] = est_values
        if set(est_support.tolist()) == set(support.tolist()) and (
            np.linalg.norm(estimate - truth) < 1e-8
        ):
            recovered += 1
    checks.append(
        CheckResult("omp-noiseless-recovery", recovered >= trials - 1, f"{recovered}/{trials} exact")
    )

    # Bussgang attenuation cross-check
    samples = (rng.standard_normal(1_000_000) + 1j * rng.standard_normal(1_000_000)) / np.sqrt(2)
    clipped = kernels.clip_signal(samples, 1.0)  # sigma = 1, so CR = 0 dB
    mc_alpha = float(np.real(np.vdot(samples, clipped)) / np.real(np.vdot(samples, samples)))
    alpha = attenuation_alpha(0.0)
    rel = abs(mc_alpha - alpha) / alpha
    checks.append(
        CheckResult("bussgang-alpha-mc", rel < 0.005, f"alpha {alpha:.5f} vs mc {mc_alpha:.5f}")
    )

    # residual (attenuated-model) variance cross-check
    from .clipper import d_variance

    params512 = ClipParams.for_constellation(const, 0.0, 1)
    alpha0 = attenuation_alpha(0.0)
    acc = 0.0
    frames = 200
    for _ in range(frames):
        bits = rng.integers(0, 2, 512 * 2, dtype=np.int8)
        tones = FreqSymbols(map_bits_values(bits, const), 512)
        frame = clip_and_filter(tones, params512)
        residual = frame.filtered_symbols.values - alpha0 * tones.values
        acc += float(np.mean(np.abs(residual) ** 2))
    mc_var = acc / frames
    var = d_variance(0.0, const.symbol_energy)
    rel = abs(mc_var - var) / var
    checks.append(
        CheckResult("residual-variance-mc", rel < 0.05, f"eq {var:.5f} vs mc {mc_var:.5f}")
    )

    # expected observation count
    from .analytic import effective_n0, expected_m

    noise_var = ebno_to_n0(6.0, const)
    n0_eff = effective_n0(0.0, noise_var, const.symbol_energy)
    predicted = expected_m(64, const.pam_order, 0.4, n0_eff)
    total = 0
    frames = 300
    for _ in range(frames):
        bits = rng.integers(0, 2, 64 * 2, dtype=np.int8)
        tones = FreqSymbols(map_bits_values(bits, const), 64)
        frame = clip_and_filter(tones, params)
        noisy = frame.filtered_symbols.values + complex_awgn(rng, 64, noise_var)
        sel, _ = select_reliable_values(noisy, alpha0, const, 0.4)
        total += sel.size
    mc_m = total / frames
    rel = abs(mc_m - predicted) / predicted
    checks.append(
        CheckResult("expected-observations", rel < 0.02, f"eq {predicted:.2f} vs mc {mc_m:.2f}")
    )

    # determinism across worker counts
    cfg = ExperimentConfig(
        ebno_grid_db=(6.0,), min_bits=10_000, max_bits=20_000, master_seed=777
    )
    csv_one = records_to_csv(run_ber(cfg, workers=1))
    csv_two = records_to_csv(run_ber(cfg, workers=2))
    csv_again = records_to_csv(run_ber(cfg, workers=1))
    checks.append(
        CheckResult(
            "seeded-determinism",
            csv_one == csv_two == csv_again,
            "byte-identical CSV for workers {1,2} and repeat runs",
        )
    )
    return checks
