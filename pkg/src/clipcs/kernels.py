"""Hot numeric kernels, in two flavours: numba-jitted and pure numpy.

The jitted variants fuse the per-frame inner loops (most importantly the
orthogonal-matching-pursuit solve, which runs one FFT plus a QR update per
iteration) into single compiled functions.  The numpy variants implement the
same algorithms with vectorized calls and are used as the fallback path.

Backend selection:
    CLIPCS_BACKEND=numba   force the jitted kernels (error if numba missing)
    CLIPCS_BACKEND=numpy   force the pure-numpy kernels
    CLIPCS_BACKEND=auto    (default) numba when importable, numpy otherwise
The active backend can also be switched at runtime with set_backend(), which
is what the benchmark harness does to compare the two.
"""

from __future__ import annotations

import math
import os
from functools import lru_cache

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    HAVE_NUMBA = False

# Relative residual floor: OMP stops once the residual is this small compared
# to the observation norm (exact recovery / zero input).
_RESIDUAL_RTOL = 1e-12
# Rank guard: a new QR diagonal this small relative to the first one means the
# selected columns are (numerically) dependent.
_RANK_RTOL = 1e-10


def _initial_backend() -> str:
    choice = os.environ.get("CLIPCS_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"CLIPCS_BACKEND must be auto|numba|numpy, got {choice!r}")
    if choice == "numba" and not HAVE_NUMBA:
        raise ImportError("CLIPCS_BACKEND=numba but numba is not importable")
    if choice == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    return choice


_active_backend = _initial_backend()


def set_backend(name: str) -> None:
    """Switch the active kernel backend ('numba' or 'numpy') at runtime."""
    global _active_backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ImportError("numba backend requested but numba is not importable")
    _active_backend = name


def get_backend() -> str:
    return _active_backend


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if HAVE_NUMBA else ("numpy",)


@lru_cache(maxsize=32)
def unit_roots(n: int) -> np.ndarray:
    """exp(-2j*pi*k/n) for k = 0..n-1 (first half doubles as the FFT twiddles)."""
    return np.exp(-2j * np.pi * np.arange(n) / n)


@lru_cache(maxsize=32)
def bit_reverse_indices(n: int) -> np.ndarray:
    """Bit-reversal permutation for a power-of-two length n."""
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


# ---------------------------------------------------------------------------
# pure-numpy kernels
# ---------------------------------------------------------------------------


def _clip_numpy(x: np.ndarray, threshold: float) -> np.ndarray:
    out = x.copy()
    mag = np.abs(x)
    over = mag > threshold
    out[over] = x[over] * (threshold / mag[over])
    return out


def _decide_level_indices_numpy(values: np.ndarray, pam_order: int):
    # Index into the descending level table [V-1, V-3, ..., -(V-1)].
    # Midpoints (exact boundary hits) resolve to the smaller level.
    half_v = pam_order // 2
    top = pam_order - 1
    idx_re = half_v - np.ceil(values.real / 2.0).astype(np.int64)
    idx_im = half_v - np.ceil(values.imag / 2.0).astype(np.int64)
    np.clip(idx_re, 0, top, out=idx_re)
    np.clip(idx_im, 0, top, out=idx_im)
    return idx_re, idx_im


def _reliable_mask_numpy(values: np.ndarray, pam_order: int, delta: float) -> np.ndarray:
    # Interior per-dimension decision boundaries sit at even integers
    # -(V-2), ..., 0, ..., V-2.  A point is reliable when both coordinates
    # are at least delta away from every boundary.
    bounds = np.arange(-(pam_order - 2), pam_order - 1, 2, dtype=np.float64)
    d_re = np.abs(values.real[:, None] - bounds).min(axis=1)
    d_im = np.abs(values.imag[:, None] - bounds).min(axis=1)
    return (d_re >= delta) & (d_im >= delta)


def _omp_numpy(obs, sel, n, max_iter, stop_threshold):
    m = obs.shape[0]
    max_iter = min(max_iter, m)
    unit = unit_roots(n)
    inv_sqrt_n = 1.0 / math.sqrt(n)

    q_basis = np.zeros((max_iter, m), dtype=np.complex128)
    r_mat = np.zeros((max_iter, max_iter), dtype=np.complex128)
    qty = np.zeros(max_iter, dtype=np.complex128)
    support = np.zeros(max_iter, dtype=np.int64)
    picked = np.zeros(n, dtype=bool)
    scatter = np.zeros(n, dtype=np.complex128)

    residual = obs.astype(np.complex128, copy=True)
    res_floor = _RESIDUAL_RTOL * np.linalg.norm(obs)
    k = 0
    while k < max_iter:
        if np.linalg.norm(residual) <= res_floor:
            break
        scatter[sel] = residual
        corr = np.abs(np.fft.ifft(scatter))
        scatter[sel] = 0.0
        corr[picked] = -1.0
        atom = int(np.argmax(corr))

        col = unit[(sel * atom) % n] * inv_sqrt_n
        w = col.copy()
        for i in range(k):  # modified Gram-Schmidt
            proj = np.vdot(q_basis[i], w)
            r_mat[i, k] = proj
            w -= proj * q_basis[i]
        w_norm = np.linalg.norm(w)
        if k > 0 and w_norm < _RANK_RTOL * r_mat[0, 0].real:
            break
        r_mat[k, k] = w_norm
        q_basis[k] = w / w_norm
        qty[k] = np.vdot(q_basis[k], obs)

        trial = _backsolve_numpy(r_mat, qty, k + 1)
        if abs(trial[k]) < stop_threshold:
            break
        support[k] = atom
        picked[atom] = True
        residual -= qty[k] * q_basis[k]
        k += 1

    values = _backsolve_numpy(r_mat, qty, k)
    return support[:k].copy(), values, k


def _backsolve_numpy(r_mat, qty, k):
    sol = np.zeros(k, dtype=np.complex128)
    for i in range(k - 1, -1, -1):
        acc = qty[i]
        for j in range(i + 1, k):
            acc -= r_mat[i, j] * sol[j]
        sol[i] = acc / r_mat[i, i]
    return sol


def _fft_unitary_numpy(x: np.ndarray, inverse: bool) -> np.ndarray:
    n = x.shape[0]
    if inverse:
        return np.fft.ifft(x) * math.sqrt(n)
    return np.fft.fft(x) / math.sqrt(n)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _fft_core_nb(x, brev, unit, inverse):
        # Iterative radix-2 transform, unnormalized sum convention.
        n = x.shape[0]
        out = np.empty(n, dtype=np.complex128)
        for i in range(n):
            out[i] = x[brev[i]]
        span = 1
        while span < n:
            stride = n // (2 * span)
            for start in range(0, n, 2 * span):
                for t in range(span):
                    w = unit[t * stride]
                    if inverse:
                        w = w.conjugate()
                    lo = out[start + t]
                    hi = out[start + t + span] * w
                    out[start + t] = lo + hi
                    out[start + t + span] = lo - hi
            span *= 2
        return out

    @njit(cache=True)
    def _backsolve_nb(r_mat, qty, k):
        sol = np.zeros(k, dtype=np.complex128)
        for i in range(k - 1, -1, -1):
            acc = qty[i]
            for j in range(i + 1, k):
                acc -= r_mat[i, j] * sol[j]
            sol[i] = acc / r_mat[i, i]
        return sol

    @njit(cache=True)
    def _clip_nb(x, threshold):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            mag = abs(x[i])
            if mag > threshold:
                out[i] = x[i] * (threshold / mag)
            else:
                out[i] = x[i]
        return out

    @njit(cache=True)
    def _decide_level_indices_nb(values, pam_order):
        half_v = pam_order // 2
        top = pam_order - 1
        n = values.shape[0]
        idx_re = np.empty(n, dtype=np.int64)
        idx_im = np.empty(n, dtype=np.int64)
        for i in range(n):
            ir = half_v - int(math.ceil(values[i].real / 2.0))
            ii = half_v - int(math.ceil(values[i].imag / 2.0))
            if ir < 0:
                ir = 0
            elif ir > top:
                ir = top
            if ii < 0:
                ii = 0
            elif ii > top:
                ii = top
            idx_re[i] = ir
            idx_im[i] = ii
        return idx_re, idx_im

    @njit(cache=True)
    def _reliable_mask_nb(values, pam_order, delta):
        n = values.shape[0]
        mask = np.empty(n, dtype=np.bool_)
        for i in range(n):
            re = values[i].real
            im = values[i].imag
            d_re = 1e300
            d_im = 1e300
            for b in range(pam_order - 1):
                bound = float(2 * b - (pam_order - 2))
                dr = abs(re - bound)
                di = abs(im - bound)
                if dr < d_re:
                    d_re = dr
                if di < d_im:
                    d_im = di
            mask[i] = (d_re >= delta) and (d_im >= delta)
        return mask

    @njit(cache=True)
    def _omp_nb(obs, sel, n, max_iter, stop_threshold, brev, unit):
        m = obs.shape[0]
        if max_iter > m:
            max_iter = m
        inv_sqrt_n = 1.0 / math.sqrt(n)

        q_basis = np.zeros((max_iter, m), dtype=np.complex128)
        r_mat = np.zeros((max_iter, max_iter), dtype=np.complex128)
        qty = np.zeros(max_iter, dtype=np.complex128)
        support = np.zeros(max_iter, dtype=np.int64)
        picked = np.zeros(n, dtype=np.bool_)
        scatter = np.zeros(n, dtype=np.complex128)

        residual = obs.copy()
        y_norm = 0.0
        for i in range(m):
            y_norm += residual[i].real ** 2 + residual[i].imag ** 2
        res_floor = _RESIDUAL_RTOL * math.sqrt(y_norm)

        k = 0
        while k < max_iter:
            r_norm = 0.0
            for i in range(m):
                r_norm += residual[i].real ** 2 + residual[i].imag ** 2
            if math.sqrt(r_norm) <= res_floor:
                break

            for i in range(m):
                scatter[sel[i]] = residual[i]
            corr = _fft_core_nb(scatter, brev, unit, True)
            for i in range(m):
                scatter[sel[i]] = 0.0
            best = -1.0
            atom = 0
            for idx in range(n):
                if picked[idx]:
                    continue
                mag = abs(corr[idx])
                if mag > best:
                    best = mag
                    atom = idx
            if best < 0.0:
                break

            w = np.empty(m, dtype=np.complex128)
            for i in range(m):
                w[i] = unit[(sel[i] * atom) % n] * inv_sqrt_n
            for i in range(k):  # modified Gram-Schmidt
                proj = 0.0 + 0.0j
                for t in range(m):
                    proj += q_basis[i, t].conjugate() * w[t]
                r_mat[i, k] = proj
                for t in range(m):
                    w[t] -= proj * q_basis[i, t]
            w_norm = 0.0
            for t in range(m):
                w_norm += w[t].real ** 2 + w[t].imag ** 2
            w_norm = math.sqrt(w_norm)
            if k > 0 and w_norm < _RANK_RTOL * r_mat[0, 0].real:
                break
            r_mat[k, k] = w_norm
            for t in range(m):
                q_basis[k, t] = w[t] / w_norm
            acc = 0.0 + 0.0j
            for t in range(m):
                acc += q_basis[k, t].conjugate() * obs[t]
            qty[k] = acc

            trial = _backsolve_nb(r_mat, qty, k + 1)
            if abs(trial[k]) < stop_threshold:
                break
            support[k] = atom
            picked[atom] = True
            for t in range(m):
                residual[t] -= qty[k] * q_basis[k, t]
            k += 1

        values = _backsolve_nb(r_mat, qty, k)
        return support[:k].copy(), values, k

    def _fft_unitary_nb(x: np.ndarray, inverse: bool) -> np.ndarray:
        n = x.shape[0]
        core = _fft_core_nb(
            np.ascontiguousarray(x, dtype=np.complex128),
            bit_reverse_indices(n),
            unit_roots(n),
            inverse,
        )
        return core / math.sqrt(n)


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------


def clip_signal(x: np.ndarray, threshold: float) -> np.ndarray:
    """Magnitude-limit x to threshold, preserving per-sample phase."""
    if _active_backend == "numba":
        return _clip_nb(np.ascontiguousarray(x, dtype=np.complex128), float(threshold))
    return _clip_numpy(np.asarray(x, dtype=np.complex128), float(threshold))


def decide_level_indices(values: np.ndarray, pam_order: int):
    """Nearest-level index per dimension (0 = topmost level, ties go down)."""
    values = np.ascontiguousarray(values, dtype=np.complex128)
    if _active_backend == "numba":
        return _decide_level_indices_nb(values, pam_order)
    return _decide_level_indices_numpy(values, pam_order)


def reliable_mask(values: np.ndarray, pam_order: int, delta: float) -> np.ndarray:
    """True where both coordinates keep margin >= delta from interior boundaries."""
    values = np.ascontiguousarray(values, dtype=np.complex128)
    if _active_backend == "numba":
        return _reliable_mask_nb(values, pam_order, float(delta))
    return _reliable_mask_numpy(values, pam_order, float(delta))


def omp_solve(observations, selected, n_ambient, max_iterations, stop_threshold):
    """Greedy sparse recovery against the row-restricted unitary DFT.

    The measurement operator is applied matrix-free: the adjoint is one
    full-size inverse FFT of the residual scattered onto the selected rows,
    and each selected column is generated from the unit-root table.  Returns
    (support, values, iterations_used).
    """
    obs = np.ascontiguousarray(observations, dtype=np.complex128)
    sel = np.ascontiguousarray(selected, dtype=np.int64)
    if _active_backend == "numba":
        return _omp_nb(
            obs,
            sel,
            n_ambient,
            int(max_iterations),
            float(stop_threshold),
            bit_reverse_indices(n_ambient),
            unit_roots(n_ambient),
        )
    return _omp_numpy(obs, sel, n_ambient, int(max_iterations), float(stop_threshold))


def fft_unitary(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unitary DFT via the active backend (np.fft or the jitted radix-2)."""
    x = np.asarray(x, dtype=np.complex128)
    if _active_backend == "numba":
        return _fft_unitary_nb(x, inverse)
    return _fft_unitary_numpy(x, inverse)


def warm_up() -> None:
    """Trigger jit compilation of every kernel (no-op on the numpy backend)."""
    if not HAVE_NUMBA:
        return
    obs = np.array([0.3 + 0.1j, -0.2 + 0.4j], dtype=np.complex128)
    sel = np.array([0, 2], dtype=np.int64)
    _omp_nb(obs, sel, 4, 2, 0.0, bit_reverse_indices(4), unit_roots(4))
    _clip_nb(obs, 1.0)
    _decide_level_indices_nb(obs, 2)
    _reliable_mask_nb(obs, 2, 0.1)
