"""Iterative radix-2 decimation-in-time FFT with operation counters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class OpCounter:
    multiplications: int = 0
    additions: int = 0


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x, inverse: bool = False, counter: OpCounter | None = None) -> np.ndarray:
    """Unscaled DFT of a power-of-two length vector.

    One complex multiply (by the twiddle, trivial ones included) and two
    complex additions are counted per butterfly.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if not is_power_of_two(n) or n < 2:
        raise ConfigurationError(f"radix-2 FFT needs a power-of-two length >= 2, got {n}")
    a = x[..., bit_reverse_indices(n)].copy()
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        w = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(a.shape[:-1] + (n // size, size))
        u = blocks[..., :half].copy()
        t = blocks[..., half:] * w
        blocks[..., :half] = u + t
        blocks[..., half:] = u - t
        if counter is not None:
            butterflies = t.size
            counter.multiplications += butterflies
            counter.additions += 2 * butterflies
        a = blocks.reshape(a.shape)
        size *= 2
    return a
