"""Frequency-domain kernel: radix-2 FFT, power spectra and Welch coherence.

The transform is a textbook iterative decimation-in-time Cooley-Tukey FFT.
Inputs are zero-padded to the next power of two.  Coherence is the
magnitude-squared coherence estimated from averaged, windowed segment
periodograms (Welch); a single raw periodogram would give a coherence of
exactly one at every bin.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cohrcf._accel import njit, pick
from cohrcf.errors import DegenerateEstimate, DimensionMismatch, EmptyInput

__all__ = [
    "Spectrum",
    "WelchParams",
    "CoherenceEstimate",
    "next_pow2",
    "dft_naive",
    "fft",
    "ifft",
    "power_spectrum",
    "cross_power",
    "default_segment_length",
    "welch_params_for",
    "segment_spectra",
    "coherence",
    "cohr_sim",
    "cohr_sim_many",
    "dump_spectrum_csv",
]

# Bins whose averaged power is below this fraction of the signal's peak bin
# are treated as empty; anything smaller is floating point residue.
ZERO_POWER_RTOL = 1e-24

WINDOWS = ("rectangular", "hann")


@dataclass(frozen=True)
class Spectrum:
    coefficients: np.ndarray
    original_length: int
    padded_length: int

    def __len__(self):
        return self.padded_length


@dataclass(frozen=True)
class WelchParams:
    segment_length: int
    overlap: float = 0.5
    window: str = "hann"

    def __post_init__(self):
        if self.segment_length < 2:
            raise ValueError(f"segment_length must be >= 2, got {self.segment_length}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must lie in [0, 1), got {self.overlap}")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; expected one of {WINDOWS}")

    @property
    def step(self) -> int:
        return self.segment_length - int(np.floor(self.overlap * self.segment_length))

    @property
    def padded_length(self) -> int:
        return next_pow2(self.segment_length)

    @property
    def n_bins(self) -> int:
        return self.padded_length // 2 + 1

    def n_segments(self, n: int) -> int:
        if n < self.segment_length:
            return 0
        return (n - self.segment_length) // self.step + 1

    def taper(self) -> np.ndarray:
        if self.window == "rectangular":
            return np.ones(self.segment_length)
        # periodic Hann, the usual choice for spectral estimation
        k = np.arange(self.segment_length)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / self.segment_length)


@dataclass(frozen=True)
class CoherenceEstimate:
    values: np.ndarray
    params: WelchParams

    def __len__(self):
        return len(self.values)


def next_pow2(n: int) -> int:
    if n < 1:
        raise ValueError("length must be positive")
    return 1 << (int(n) - 1).bit_length()


# --------------------------------------------------------------------------
# FFT kernels.  Both operate in place on a 2-D complex array whose row length
# is a power of two, transforming every row.


@njit
def _fft_rows_numba(a, inverse):
    rows, n = a.shape
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            for r in range(rows):
                tmp = a[r, i]
                a[r, i] = a[r, j]
                a[r, j] = tmp
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        for k in range(half):
            ang = sign * 2.0 * np.pi * k / m
            w = complex(np.cos(ang), np.sin(ang))
            for start in range(0, n, m):
                lo = start + k
                hi = lo + half
                for r in range(rows):
                    u = a[r, lo]
                    t = w * a[r, hi]
                    a[r, lo] = u + t
                    a[r, hi] = u - t
        m *= 2


@functools.lru_cache(maxsize=64)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@functools.lru_cache(maxsize=64)
def _twiddles(m: int, inverse: bool) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(m // 2) / m)


def _fft_rows_numpy(a, inverse):
    rows, n = a.shape
    a[:] = a[:, _bit_reverse(n)]
    m = 2
    while m <= n:
        half = m // 2
        v = a.reshape(rows, n // m, m)
        u = v[..., :half].copy()
        t = v[..., half:] * _twiddles(m, inverse)
        v[..., :half] = u + t
        v[..., half:] = u - t
        m *= 2


_fft_rows = pick(_fft_rows_numba, _fft_rows_numpy)


def _as_rows(x, length):
    """Copy ``x`` (1-D or 2-D) into a zero-padded complex 2-D buffer."""
    x = np.asarray(x)
    flat = x.ndim == 1
    x2 = x.reshape(1, -1) if flat else x
    buf = np.zeros((x2.shape[0], length), dtype=np.complex128)
    buf[:, : x2.shape[1]] = x2
    return buf


def fft_rows(x, inverse=False):
    """Transform every row of a 2-D array whose width is a power of two."""
    buf = np.array(x, dtype=np.complex128, order="C", copy=True)
    if buf.ndim != 2:
        raise ValueError("fft_rows expects a 2-D array")
    n = buf.shape[1]
    if n == 0:
        raise EmptyInput("cannot transform empty rows")
    if n & (n - 1):
        raise ValueError(f"row length {n} is not a power of two")
    _fft_rows(buf, inverse)
    if inverse:
        buf /= n
    return buf


def dft_naive(x) -> Spectrum:
    """Direct O(n^2) DFT, no padding.  Used as the reference for :func:`fft`."""
    x = np.asarray(x, dtype=np.complex128).ravel()
    n = x.size
    if n == 0:
        raise EmptyInput("dft of an empty sequence")
    return Spectrum(_dft_basis(n) @ x, n, n)


@functools.lru_cache(maxsize=16)
def _dft_basis(n: int) -> np.ndarray:
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    basis.setflags(write=False)
    return basis


def fft(x) -> Spectrum:
    """Radix-2 FFT of ``x`` after zero-padding to the next power of two."""
    x = np.asarray(x).ravel()
    if x.size == 0:
        raise EmptyInput("fft of an empty sequence")
    n_pad = next_pow2(x.size)
    buf = _as_rows(x, n_pad)
    _fft_rows(buf, False)
    return Spectrum(buf[0], x.size, n_pad)


def ifft(X, truncate=False) -> np.ndarray:
    """Inverse transform of a :class:`Spectrum` (or raw power-of-two array).

    Returns ``padded_length`` samples, or the first ``original_length`` when
    ``truncate`` is set.
    """
    if isinstance(X, Spectrum):
        coeffs, keep = X.coefficients, X.original_length
    else:
        coeffs = np.asarray(X, dtype=np.complex128).ravel()
        keep = coeffs.size
    out = fft_rows(coeffs.reshape(1, -1), inverse=True)[0]
    return out[:keep] if truncate else out


def power_spectrum(X: Spectrum) -> np.ndarray:
    c = X.coefficients
    return c.real**2 + c.imag**2


def cross_power(X: Spectrum, Y: Spectrum) -> np.ndarray:
    """Per-bin ``Y * conj(X)``."""
    if X.padded_length != Y.padded_length:
        raise DimensionMismatch(
            f"spectra have different lengths ({X.padded_length} vs {Y.padded_length})"
        )
    return Y.coefficients * np.conj(X.coefficients)


# --------------------------------------------------------------------------
# Welch coherence


def default_segment_length(n: int, cap: int = 32) -> int:
    """Largest power of two not above ``n / 2``, capped at ``cap``."""
    p = 1
    while 2 * p <= n / 2:
        p *= 2
    return min(p, cap)


def welch_params_for(n, segment_cap=32, overlap=0.5, window="hann") -> WelchParams:
    """Default estimator settings for sequences of length ``n``.

    Raises :class:`DegenerateEstimate` when ``n`` is too short to hold two
    segments of at least two samples.
    """
    seg = default_segment_length(n, segment_cap)
    if seg < 2:
        raise DegenerateEstimate(f"sequence of length {n} is too short for a Welch estimate")
    params = WelchParams(seg, overlap, window)
    if params.n_segments(n) < 2:
        raise DegenerateEstimate(f"sequence of length {n} holds fewer than 2 segments")
    return params


def segment_spectra(x, params: WelchParams) -> np.ndarray:
    """One-sided spectra of the windowed segments of each row of ``x``.

    ``x`` may be 1-D (one sequence) or 2-D (one sequence per row).  The result
    has shape ``(rows, n_segments, n_bins)`` (rows dropped for 1-D input).
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.ndim == 1
    x2 = x.reshape(1, -1) if flat else x
    n = x2.shape[1]
    n_seg = params.n_segments(n)
    if n_seg < 2:
        raise DegenerateEstimate(
            f"{n_seg} segment(s) of length {params.segment_length} fit a sequence of "
            f"length {n}; at least 2 are required"
        )
    L = params.segment_length
    segs = sliding_window_view(x2, L, axis=1)[:, :: params.step][:, :n_seg]
    segs = segs * params.taper()
    rows = x2.shape[0]
    buf = _as_rows(segs.reshape(rows * n_seg, L), params.padded_length)
    _fft_rows(buf, False)
    out = buf[:, : params.n_bins].reshape(rows, n_seg, params.n_bins)
    return out[0] if flat else out


def _msc(sxy, sxx, syy, peak_x, peak_y):
    live = (sxx > ZERO_POWER_RTOL * peak_x) & (syy > ZERO_POWER_RTOL * peak_y)
    num = sxy.real**2 + sxy.imag**2
    den = np.where(live, sxx * syy, 1.0)
    return np.clip(np.where(live, num / den, 0.0), 0.0, 1.0)


def coherence(x, y, params: WelchParams) -> CoherenceEstimate:
    """Magnitude-squared coherence of two real sequences, one value per bin.

    Bins where either averaged auto-spectrum is zero are reported as 0.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimensionMismatch(f"sequence lengths differ ({x.size} vs {y.size})")
    X = segment_spectra(x, params)
    Y = segment_spectra(y, params)
    sxx = np.sum(X.real**2 + X.imag**2, axis=0)
    syy = np.sum(Y.real**2 + Y.imag**2, axis=0)
    sxy = np.sum(Y * np.conj(X), axis=0)
    values = _msc(sxy, sxx, syy, sxx.max(initial=0.0), syy.max(initial=0.0))
    return CoherenceEstimate(values, params)


def cohr_sim(x, y, params: WelchParams) -> float:
    """Mean magnitude-squared coherence across all one-sided frequency bins."""
    values = coherence(x, y, params).values
    return float(values.sum() / len(values))


def cohr_sim_many(target: np.ndarray, spectra: np.ndarray) -> np.ndarray:
    """CohrSim of one segmented spectrum against a stack of them.

    ``target`` has shape ``(n_segments, n_bins)``; ``spectra`` has shape
    ``(rows, n_segments, n_bins)``, as produced by :func:`segment_spectra`.
    """
    sxx = np.sum(target.real**2 + target.imag**2, axis=0)
    syy = np.sum(spectra.real**2 + spectra.imag**2, axis=1)
    sxy = np.einsum("rsb,sb->rb", spectra, np.conj(target))
    peak_y = syy.max(axis=1, initial=0.0)[:, None]
    values = _msc(sxy, sxx[None, :], syy, sxx.max(initial=0.0), peak_y)
    return values.mean(axis=1)


def dump_spectrum_csv(X: Spectrum, path) -> None:
    """Debug dump: one row per bin with real, imaginary and squared magnitude."""
    power = power_spectrum(X)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "real", "imag", "mag2"])
        for k, (c, p) in enumerate(zip(X.coefficients, power)):
            writer.writerow([k, repr(float(c.real)), repr(float(c.imag)), repr(float(p))])
