"""Dense-array numerics: radix-2 FFTs, windows and elementwise kernels.

Every function here is pure: inputs are never mutated and identical inputs
produce bit-identical outputs. Complex work is done in whatever complex
dtype the caller hands in (complex64 for bulk cube processing, complex128
when precision matters, e.g. in test oracles).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "is_power_of_two",
    "fft_1d",
    "fft_axis",
    "fftshift_axis",
    "hann_window",
    "magnitude",
    "log_compress",
]

DEFAULT_LOG_EPSILON = 1e-6


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_axis(ndim: int, axis: int) -> int:
    if not -ndim <= axis < ndim:
        raise ValueError(f"axis {axis} out of range for {ndim}-dimensional input")
    return axis % ndim


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft_last_axis(a: np.ndarray, inverse: bool) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey along the last axis, vectorized over
    all leading axes. Power-of-two lengths only."""
    n = a.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    out_dtype = np.complex64 if a.dtype == np.complex64 else np.complex128
    a = np.ascontiguousarray(a[..., _bit_reverse_indices(n)]).astype(out_dtype, copy=False)
    sign = 1.0 if inverse else -1.0
    m = 1
    while m < n:
        w = np.exp(sign * 2j * np.pi * np.arange(m) / (2 * m)).astype(out_dtype)
        view = a.reshape(a.shape[:-1] + (n // (2 * m), 2, m))
        u = view[..., 0, :].copy()
        v = view[..., 1, :] * w
        view[..., 0, :] = u + v
        view[..., 1, :] = u - v
        m *= 2
    if inverse:
        a = a / out_dtype(n)
    return a


def fft_1d(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Radix-2 DFT of a complex vector.

    Forward is unnormalized; inverse carries the 1/N factor, so
    fft_1d(fft_1d(x), inverse=True) recovers x.
    """
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError(f"fft_1d expects a 1-D vector, got shape {x.shape}")
    if not np.iscomplexobj(x):
        x = x.astype(np.complex128)
    return _fft_last_axis(x, inverse)


def fft_axis(t: np.ndarray, axis: int, inverse: bool = False) -> np.ndarray:
    """Independent fft_1d over every 1-D lane along `axis`."""
    t = np.asarray(t)
    axis = _check_axis(t.ndim, axis)
    if not np.iscomplexobj(t):
        t = t.astype(np.complex128)
    moved = np.moveaxis(t, axis, -1)
    return np.moveaxis(_fft_last_axis(moved, inverse), -1, axis)


def fftshift_axis(t: np.ndarray, axis: int) -> np.ndarray:
    """Circular rotation by floor(N/2) along `axis` (centers bin zero)."""
    t = np.asarray(t)
    axis = _check_axis(t.ndim, axis)
    return np.roll(t, t.shape[axis] // 2, axis=axis)


def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann window, w[k] = 0.5 - 0.5*cos(2*pi*k/(n-1))."""
    if n < 2:
        raise ValueError(f"hann_window needs n >= 2, got {n}")
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))


def magnitude(t: np.ndarray) -> np.ndarray:
    """Elementwise |z| of a complex array."""
    t = np.asarray(t)
    if not np.iscomplexobj(t):
        raise TypeError(f"magnitude expects a complex array, got dtype {t.dtype}")
    return np.abs(t)


def log_compress(t: np.ndarray, epsilon: float = DEFAULT_LOG_EPSILON) -> np.ndarray:
    """Natural log(x + epsilon) of a non-negative array."""
    t = np.asarray(t)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if t.size and float(t.min()) < 0:
        raise ValueError("log_compress requires non-negative input")
    return np.log(t + epsilon)
