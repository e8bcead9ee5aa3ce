"""Discrete Fourier transforms and the time/spectrum dual-channel beat input.

All transforms act along the last axis and accept any leading batch shape.
Arithmetic is complex128 throughout.
"""

import numpy as np

from .beats import WINDOW


def _as_complex(x):
    return np.asarray(x, dtype=np.complex128)


def dft_naive(x):
    """Direct O(n^2) DFT, ``X[k] = sum_j x[j] exp(-2 pi i j k / n)``."""
    x = _as_complex(x)
    n = x.shape[-1]
    if n < 1:
        raise ValueError("empty input")
    jk = np.outer(np.arange(n), np.arange(n)) % n  # reduce before scaling keeps the angle exact
    kernel = np.exp(-2j * np.pi * jk / n)
    return x @ kernel


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def fft_radix2(x):
    """Iterative decimation-in-time Cooley-Tukey FFT; length must be a power of two."""
    x = _as_complex(x)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    if n == 1:
        return x.copy()
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = x[..., rev]
    batch = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*batch, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*batch, n)
        size *= 2
    return a


def ifft_radix2(X):
    X = _as_complex(X)
    return np.conj(fft_radix2(np.conj(X))) / X.shape[-1]


def fft_bluestein(x):
    """Arbitrary-length DFT via the chirp-z identity ``jk = (j^2 + k^2 - (k-j)^2) / 2``.

    The DFT becomes a circular convolution with the chirp
    ``w[m] = exp(i pi m^2 / n)``, computed with radix-2 transforms of length
    ``m >= 2n - 1``.
    """
    x = _as_complex(x)
    n = x.shape[-1]
    if n < 1:
        raise ValueError("empty input")
    if n == 1:
        return x.copy()
    m = 1 << (2 * n - 2).bit_length()
    k = np.arange(n)
    # m^2 mod 2n keeps the phase argument small
    chirp = np.exp(1j * np.pi * ((k * k) % (2 * n)) / n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * np.conj(chirp)
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = chirp
    b[m - n + 1:] = chirp[1:][::-1]
    conv = ifft_radix2(fft_radix2(a) * fft_radix2(b))
    return np.conj(chirp) * conv[..., :n]


def fft(x):
    """Radix-2 when the length allows, Bluestein otherwise."""
    n = np.shape(x)[-1]
    return fft_radix2(x) if _is_pow2(n) else fft_bluestein(x)


def magnitude_spectrum(window):
    """``|DFT(window)|`` over the full length, unnormalised."""
    return np.abs(fft_bluestein(np.asarray(window, dtype=np.float64)))


def make_dual_input(window, spec):
    """Stack time samples (row 0) and spectrum (row 1) into a 2 x n array.

    Works on single windows ``(n,)`` and batches ``(b, n)``; the batched
    result has shape ``(b, 2, n)``.
    """
    window = np.asarray(window)
    spec = np.asarray(spec)
    if window.shape != spec.shape:
        raise ValueError(f"window {window.shape} and spectrum {spec.shape} differ in shape")
    return np.stack([window, spec], axis=-2)


def dual_inputs(windows, dtype=np.float32):
    """Batch helper: windows ``(b, 260)`` to dual-channel inputs ``(b, 2, 260)``."""
    windows = np.asarray(windows)
    if windows.shape[-1] != WINDOW:
        raise ValueError(f"expected windows of length {WINDOW}, got {windows.shape[-1]}")
    spec = magnitude_spectrum(windows)
    return make_dual_input(windows.astype(np.float64), spec).astype(dtype)
