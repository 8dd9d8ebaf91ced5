"""SEFDM/OFDM baseband frame synthesis.

A frame is one multicarrier symbol: N QPSK symbols on sub-carriers spaced
by ``alpha / T``, sampled ``oversampling`` times per orthogonal sub-carrier
spacing.  ``alpha == 1`` is OFDM, ``alpha < 1`` is SEFDM.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, StatisticalConfidenceError

TYPE_I_ALPHAS = (1.0, 0.9, 0.8, 0.7)
TYPE_II_ALPHAS = (1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7)
GROUP_ALPHAS = {"TypeI": TYPE_I_ALPHAS, "TypeII": TYPE_II_ALPHAS}

# Gray map, first bit -> sign of I, second bit -> sign of Q
_QPSK_TABLE = {
    (0, 0): complex(1, 1),
    (0, 1): complex(-1, 1),
    (1, 1): complex(-1, -1),
    (1, 0): complex(1, -1),
}
_QPSK_POINTS = np.array([_QPSK_TABLE[(0, 0)], _QPSK_TABLE[(0, 1)],
                         _QPSK_TABLE[(1, 0)], _QPSK_TABLE[(1, 1)]]) / np.sqrt(2)


@dataclass(frozen=True)
class WaveformSpec:
    n_subcarriers: int = 256
    alpha: float = 1.0
    oversampling: int = 8

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.oversampling < 1:
            raise ConfigurationError("n_subcarriers and oversampling must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {self.alpha}")

    @property
    def frame_len(self) -> int:
        return self.n_subcarriers * self.oversampling

    @property
    def fast_length(self) -> Fraction:
        """Zero-padded transform length rho*N/alpha (may be non-integer)."""
        alpha = Fraction(str(self.alpha)).limit_denominator(100000)
        return Fraction(self.frame_len) / alpha


@dataclass(frozen=True)
class SignalClass:
    kind: str
    alpha: float
    group: str
    index: int

    def __post_init__(self):
        if self.group not in GROUP_ALPHAS:
            raise ConfigurationError(f"unknown group {self.group!r}")
        if self.alpha not in GROUP_ALPHAS[self.group]:
            raise ConfigurationError(f"alpha {self.alpha} not in group {self.group}")
        expected = "OFDM" if self.alpha == 1.0 else "SEFDM"
        if self.kind != expected:
            raise ConfigurationError(f"alpha {self.alpha} is {expected}, not {self.kind}")

    @property
    def name(self) -> str:
        return "OFDM" if self.kind == "OFDM" else f"SEFDM({self.alpha:g})"


@dataclass
class Frame:
    samples: np.ndarray
    signal_class: SignalClass | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def replace(self, samples: np.ndarray) -> "Frame":
        return Frame(samples, self.signal_class, self.seed, dict(self.meta))


def signal_classes(group: str) -> list[SignalClass]:
    """Class list of a group in label order (OFDM first, then decreasing alpha)."""
    try:
        alphas = GROUP_ALPHAS[group]
    except KeyError:
        raise ConfigurationError(f"unknown group {group!r}") from None
    return [SignalClass("OFDM" if a == 1.0 else "SEFDM", a, group, i)
            for i, a in enumerate(alphas)]


def map_qpsk(bits: Sequence[int]) -> complex:
    if len(bits) != 2:
        raise ConfigurationError("QPSK maps exactly two bits")
    return _QPSK_TABLE[(int(bits[0]) & 1, int(bits[1]) & 1)] / np.sqrt(2)


def map_qpsk_array(bits: np.ndarray) -> np.ndarray:
    """Vectorised Gray map of a flat bit array (even length) to symbols."""
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, 2)
    return _QPSK_POINTS[2 * bits[:, 0] + bits[:, 1]]


def random_qpsk(n: int, rng: np.random.Generator) -> np.ndarray:
    return map_qpsk_array(rng.integers(0, 2, size=2 * n))


def normalize_power(x: np.ndarray) -> np.ndarray:
    p = np.mean(np.abs(x) ** 2, axis=-1, keepdims=True)
    return x / np.sqrt(p)


@lru_cache(maxsize=32)
def _synthesis_matrix(n_subcarriers: int, alpha: float, oversampling: int) -> np.ndarray:
    n = np.arange(n_subcarriers)
    k = np.arange(n_subcarriers * oversampling)
    phase = np.outer(n, k) * (alpha / (oversampling * n_subcarriers))
    # reduce before the exponential so large n*k products keep full precision
    phase = phase - np.floor(phase)
    m = np.exp(2j * np.pi * phase) / np.sqrt(n_subcarriers)
    m.setflags(write=False)
    return m


def synthesize(spec: WaveformSpec, symbols: np.ndarray) -> np.ndarray:
    """Un-normalised direct sum over sub-carriers; accepts (..., N) symbol batches."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape[-1] != spec.n_subcarriers:
        raise ConfigurationError(
            f"expected {spec.n_subcarriers} symbols, got {symbols.shape[-1]}")
    return symbols @ _synthesis_matrix(spec.n_subcarriers, float(spec.alpha), spec.oversampling)


def synthesize_fast(spec: WaveformSpec, symbols: np.ndarray) -> np.ndarray:
    """Zero-pad to rho*N/alpha, inverse FFT, keep the first rho*N samples."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape[-1] != spec.n_subcarriers:
        raise ConfigurationError(
            f"expected {spec.n_subcarriers} symbols, got {symbols.shape[-1]}")
    m = spec.fast_length
    if m.denominator != 1:
        raise ConfigurationError(
            f"oversampling*N/alpha = {float(m):.4f} is not an integer; "
            "use generate_direct for this alpha")
    m = int(m)
    x = np.fft.ifft(symbols, n=m, axis=-1) * (m / np.sqrt(spec.n_subcarriers))
    return x[..., :spec.frame_len]


def generate_direct(spec: WaveformSpec, symbols: np.ndarray, seed: int | None = None,
                    signal_class: SignalClass | None = None) -> Frame:
    return Frame(normalize_power(synthesize(spec, symbols)), signal_class, seed)


def generate_fast(spec: WaveformSpec, symbols: np.ndarray, seed: int | None = None,
                  signal_class: SignalClass | None = None) -> Frame:
    return Frame(normalize_power(synthesize_fast(spec, symbols)), signal_class, seed)


def generate_frames(spec: WaveformSpec, n_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Batch of normalised frames with fresh random QPSK, shape (n_frames, frame_len)."""
    symbols = random_qpsk(n_frames * spec.n_subcarriers, rng).reshape(n_frames, -1)
    return normalize_power(synthesize(spec, symbols))


def averaged_periodogram(frames: np.ndarray, pad: int = 4) -> np.ndarray:
    frames = np.atleast_2d(np.asarray(frames))
    n = frames.shape[-1] * pad
    psd = np.mean(np.abs(np.fft.fft(frames, n=n, axis=-1)) ** 2, axis=0)
    return np.fft.fftshift(psd)


def occupied_bandwidth(psd: np.ndarray, fraction: float = 0.99) -> float:
    """Width, in bins, between the (1-f)/2 and (1+f)/2 cumulative-power points."""
    c = np.cumsum(psd) / np.sum(psd)
    tail = (1.0 - fraction) / 2
    lo = np.interp(tail, c, np.arange(len(c)))
    hi = np.interp(1.0 - tail, c, np.arange(len(c)))
    return float(hi - lo)


MIN_FRAMES_FOR_PSD = 100


def spectral_compression(frames_a, frames_b, fraction: float = 0.99) -> float:
    """Occupied-bandwidth ratio of frame set ``a`` to the OFDM reference set ``b``."""
    arrays = []
    for frames in (frames_a, frames_b):
        if isinstance(frames, np.ndarray):
            arr = np.atleast_2d(frames)
        else:
            arr = np.stack([f.samples if isinstance(f, Frame) else f for f in frames])
        if arr.shape[0] < MIN_FRAMES_FOR_PSD:
            raise StatisticalConfidenceError(
                f"need at least {MIN_FRAMES_FOR_PSD} frames per class, got {arr.shape[0]}")
        arrays.append(arr)
    if arrays[0].shape[1] != arrays[1].shape[1]:
        raise ConfigurationError("frame sets differ in length")
    bw_a = occupied_bandwidth(averaged_periodogram(arrays[0]), fraction)
    bw_b = occupied_bandwidth(averaged_periodogram(arrays[1]), fraction)
    return bw_a / bw_b
