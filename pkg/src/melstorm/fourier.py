"""Exact-length discrete Fourier transforms along the last axis.

Power-of-two sizes run an iterative radix-2 FFT; every other size goes
through Bluestein's chirp-z reduction to a zero-padded power-of-two
convolution, so awkward frame sizes (2034, say) cost only a couple of
padded radix-2 transforms. All arithmetic is complex128.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(1, n):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
    return rev


@lru_cache(maxsize=None)
def _twiddle(size: int, inverse: bool) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)


def _fft_pow2(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Radix-2 decimation-in-time FFT over the last axis (length a power of two)."""
    n = a.shape[-1]
    out = np.ascontiguousarray(a[..., _bit_reverse(n)], dtype=np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = _twiddle(size, inverse)
        v = out.reshape(out.shape[:-1] + (n // size, size))
        odd = v[..., half:] * tw
        even = v[..., :half]
        v[..., half:] = even - odd
        v[..., :half] = even + odd
        size *= 2
    return out


@lru_cache(maxsize=None)
def _bluestein_plan(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    # Chirp phase uses m*m mod 2n to keep the angle small and accurate.
    m = np.arange(n, dtype=np.int64)
    half_sq = (m * m) % (2 * n)
    chirp = np.exp((-1j * np.pi / n) * half_sq)
    length = 1 << (2 * n - 1).bit_length()
    b = np.zeros(length, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[length - n + 1 :] = np.conj(chirp[1:])[::-1]
    return chirp, _fft_pow2(b), length


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    chirp, b_fft, length = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (length,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = _fft_pow2(_fft_pow2(a) * b_fft, inverse=True) / length
    return conv[..., :n] * chirp


def fft(x: np.ndarray, n: int | None = None) -> np.ndarray:
    """Length-n DFT of the last axis; input is zero-padded or truncated to n."""
    x = np.asarray(x, dtype=np.complex128)
    if n is None:
        n = x.shape[-1]
    if n < 1:
        raise ValueError(f"fft: transform length must be >= 1, got {n}")
    if x.shape[-1] != n:
        padded = np.zeros(x.shape[:-1] + (n,), dtype=np.complex128)
        k = min(n, x.shape[-1])
        padded[..., :k] = x[..., :k]
        x = padded
    if n & (n - 1) == 0:
        return _fft_pow2(x)
    return _bluestein(x)


def ifft(x: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse DFT, the exact round-trip partner of :func:`fft`."""
    x = np.asarray(x, dtype=np.complex128)
    if n is None:
        n = x.shape[-1]
    return np.conj(fft(np.conj(x), n)) / n


def rfft_batch(frames: np.ndarray, n: int) -> np.ndarray:
    """DFT of a batch of real rows, two rows per complex transform.

    Real inputs allow the classic packing z = a + i*b and separation by
    conjugate symmetry, halving the transform count. Returns the full
    [rows, n] spectrum.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError(f"rfft_batch: expected [rows, samples], got shape {frames.shape}")
    rows = frames.shape[0]
    padded_rows = rows + (rows & 1)
    z = np.zeros((padded_rows // 2, frames.shape[1]), dtype=np.complex128)
    z.real = frames[0::2]
    z.imag[: rows // 2] = frames[1::2]
    zf = fft(z, n)
    rev = np.conj(zf[:, (n - np.arange(n)) % n])
    out = np.empty((padded_rows, n), dtype=np.complex128)
    out[0::2] = 0.5 * (zf + rev)
    out[1::2] = -0.5j * (zf - rev)
    return out[:rows]
