"""Channel and hardware impairment model.

Rician multipath with Jakes-spectrum Doppler, carrier frequency offset and
AWGN, applied in that order.  Every function accepts either a ``Frame`` or a
raw sample array; arrays may carry a leading batch axis.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .waveform import Frame

NOISELESS = "noiseless"


@dataclass(frozen=True)
class ImpairmentProfile:
    carrier_hz: float = 900e6
    sample_rate_hz: float = 200e3
    path_delays_s: tuple = (0.0, 9e-6, 1.7e-5)
    path_powers_db: tuple = (0.0, -2.0, -10.0)
    max_doppler_hz: float = 4.0
    k_factor: float = 4.0
    cfo_ppm: float = 2.0
    # fixed oscillator offset added to every per-frame draw (one device's calibration)
    cfo_offset_ppm: float = 0.0
    esn0_db: float | str = NOISELESS
    fractional_delay: bool = False
    n_sinusoids: int = 32
    # identity profiles skip multipath entirely (clean recipes)
    multipath: bool = True

    def __post_init__(self):
        object.__setattr__(self, "path_delays_s", tuple(float(d) for d in self.path_delays_s))
        object.__setattr__(self, "path_powers_db", tuple(float(p) for p in self.path_powers_db))
        if len(self.path_delays_s) != len(self.path_powers_db) or not self.path_delays_s:
            raise ConfigurationError("path_delays_s and path_powers_db must be non-empty and equal length")
        d = np.asarray(self.path_delays_s)
        if np.any(d < 0) or np.any(np.diff(d) < 0):
            raise ConfigurationError("path delays must be non-negative and ascending")
        if self.k_factor < 0 or self.max_doppler_hz < 0 or self.cfo_ppm < 0:
            raise ConfigurationError("k_factor, max_doppler_hz and cfo_ppm must be >= 0")
        if self.sample_rate_hz <= 0 or self.n_sinusoids < 1:
            raise ConfigurationError("sample_rate_hz and n_sinusoids must be positive")
        if isinstance(self.esn0_db, str):
            if self.esn0_db != NOISELESS:
                raise ConfigurationError(f"esn0_db must be a number or {NOISELESS!r}")
        else:
            object.__setattr__(self, "esn0_db", float(self.esn0_db))

    @classmethod
    def identity(cls) -> "ImpairmentProfile":
        """Clean profile: single unit tap, no CFO, no noise."""
        return cls(path_delays_s=(0.0,), path_powers_db=(0.0,), max_doppler_hz=0.0,
                   k_factor=0.0, cfo_ppm=0.0, esn0_db=NOISELESS, multipath=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ImpairmentProfile":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown profile keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["path_delays_s"] = list(self.path_delays_s)
        d["path_powers_db"] = list(self.path_powers_db)
        return d

    def with_esn0(self, esn0_db) -> "ImpairmentProfile":
        return replace(self, esn0_db=esn0_db)

    @property
    def is_identity(self) -> bool:
        return (not self.multipath and self.cfo_ppm == 0 and self.cfo_offset_ppm == 0
                and self.esn0_db == NOISELESS)

    @property
    def tap_delays_samples(self) -> np.ndarray:
        return np.asarray(self.path_delays_s) * self.sample_rate_hz

    @property
    def tap_positions(self) -> np.ndarray:
        # round half away from zero; delays are non-negative
        return np.floor(self.tap_delays_samples + 0.5).astype(int)

    @property
    def tap_powers(self) -> np.ndarray:
        p = 10.0 ** (np.asarray(self.path_powers_db) / 10.0)
        return p / p.sum()

    @property
    def max_cfo_hz(self) -> float:
        return self.cfo_ppm * 1e-6 * self.carrier_hz

    @property
    def cfo_offset_hz(self) -> float:
        return self.cfo_offset_ppm * 1e-6 * self.carrier_hz


@dataclass
class ChannelRealization:
    tap_gains: np.ndarray
    cfo_hz: float = 0.0
    initial_phase: float = 0.0
    los_gain: complex = field(default=0j, repr=False)


class FadingProcess:
    """Time-continuous tap gains for one frame sequence.

    Diffuse parts are sums of ``n_sinusoids`` complex sinusoids with
    Doppler shifts ``fd*cos(theta_m)`` (Jakes spectrum), one independent
    set per tap.  Tap 0 additionally carries a static line-of-sight term
    with random phase carrying ``K/(K+1)`` of its power.
    """

    def __init__(self, profile: ImpairmentProfile, rng: np.random.Generator):
        self.profile = profile
        n_taps, m = len(profile.path_delays_s), profile.n_sinusoids
        offset = rng.uniform(0, 2 * np.pi, size=(n_taps, 1))
        theta = (2 * np.pi * np.arange(m)[None, :] + offset) / m
        self._doppler = profile.max_doppler_hz * np.cos(theta)
        self._phase = rng.uniform(0, 2 * np.pi, size=(n_taps, m))
        self._los_phase = rng.uniform(0, 2 * np.pi)
        k = profile.k_factor
        self._amp = np.sqrt(profile.tap_powers)
        self._diffuse_scale = np.ones(n_taps)
        self._diffuse_scale[0] = np.sqrt(1.0 / (k + 1.0))
        self.los_gain = self._amp[0] * np.sqrt(k / (k + 1.0)) * np.exp(1j * self._los_phase)

    def diffuse(self, t) -> np.ndarray:
        """Unit-power diffuse processes, shape (len(t), n_taps)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        arg = 2 * np.pi * self._doppler[None] * t[:, None, None] + self._phase[None]
        return np.exp(1j * arg).sum(axis=-1) / np.sqrt(self._phase.shape[1])

    def gains(self, t) -> np.ndarray:
        g = self.diffuse(t) * (self._amp * self._diffuse_scale)[None]
        g[:, 0] += self.los_gain
        return g


def _draw_cfo(profile: ImpairmentProfile, rng: np.random.Generator, size=None):
    f_max = profile.max_cfo_hz
    cfo = rng.uniform(-f_max, f_max, size=size) + profile.cfo_offset_hz
    phi = rng.uniform(0, 2 * np.pi, size=size)
    return cfo, phi


def draw_frame_cfo(profile: ImpairmentProfile, rng: np.random.Generator) -> tuple:
    """(cfo_hz, phase) for one frame; zero when the profile has no CFO at all."""
    if profile.cfo_ppm == 0 and profile.cfo_offset_ppm == 0:
        return 0.0, 0.0
    cfo, phi = _draw_cfo(profile, rng)
    return float(cfo), float(phi)


def realize_channel(profile: ImpairmentProfile, rng: np.random.Generator) -> ChannelRealization:
    """One independent channel draw (fresh fading process sampled at a random time)."""
    proc = FadingProcess(profile, rng)
    t = rng.uniform(0, 1e3)
    gains = proc.gains(t)[0]
    cfo, phi = _draw_cfo(profile, rng)
    return ChannelRealization(gains, float(cfo), float(phi), complex(proc.los_gain))


def realize_channels(profile: ImpairmentProfile, rng: np.random.Generator, n: int) -> np.ndarray:
    """Vectorised independent tap-gain draws, shape (n, n_taps)."""
    n_taps, m = len(profile.path_delays_s), profile.n_sinusoids
    # each row is a fresh process evaluated at t=0, which only needs the random phases
    diffuse = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(n, n_taps, m))).sum(-1) / np.sqrt(m)
    k = profile.k_factor
    amp = np.sqrt(profile.tap_powers)
    scale = np.ones(n_taps)
    scale[0] = np.sqrt(1.0 / (k + 1.0))
    g = diffuse * (amp * scale)[None]
    g[:, 0] += amp[0] * np.sqrt(k / (k + 1.0)) * np.exp(1j * rng.uniform(0, 2 * np.pi, size=n))
    return g


def _unwrap(frame):
    if isinstance(frame, Frame):
        return frame.samples, frame
    return np.asarray(frame), None


def _wrap(samples, original):
    return original.replace(samples) if original is not None else samples


def _fractional_taps(delay: float, half_len: int = 8) -> tuple[np.ndarray, int]:
    """Hann-windowed sinc interpolator for a non-integer delay."""
    base = int(np.floor(delay)) - half_len + 1
    n = np.arange(base, base + 2 * half_len)
    h = np.sinc(n - delay) * np.hanning(2 * half_len + 2)[1:-1]
    return h / h.sum(), base


def convolve_taps(x: np.ndarray, gains: np.ndarray, profile: ImpairmentProfile) -> np.ndarray:
    """Frame-local sparse FIR; ``x`` is (..., L) and ``gains`` broadcast as (..., n_taps)."""
    x = np.asarray(x, dtype=complex)
    gains = np.asarray(gains, dtype=complex)
    length = x.shape[-1]
    y = np.zeros(np.broadcast_shapes(x.shape, gains.shape[:-1] + (length,)), dtype=complex)
    if profile.fractional_delay:
        for p, delay in enumerate(profile.tap_delays_samples):
            h, base = _fractional_taps(delay)
            for i, hv in enumerate(h):
                _add_shifted(y, x, gains[..., p:p + 1] * hv, base + i)
    else:
        for p, d in enumerate(profile.tap_positions):
            _add_shifted(y, x, gains[..., p:p + 1], int(d))
    return y


def _add_shifted(y, x, g, d):
    length = x.shape[-1]
    if d >= length or d <= -length:
        return
    if d >= 0:
        y[..., d:] += g * x[..., :length - d]
    else:
        y[..., :d] += g * x[..., -d:]


def apply_channel(frame, realization: ChannelRealization, profile: ImpairmentProfile):
    x, orig = _unwrap(frame)
    return _wrap(convolve_taps(x, realization.tap_gains, profile), orig)


def rotate(x: np.ndarray, cfo_hz, phase, sample_rate_hz: float) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    k = np.arange(x.shape[-1])
    cfo = np.asarray(cfo_hz, dtype=float)[..., None]
    phase = np.asarray(phase, dtype=float)[..., None]
    return x * np.exp(1j * (2 * np.pi * cfo * k / sample_rate_hz + phase))


def apply_cfo(frame, profile: ImpairmentProfile, rng: np.random.Generator,
              cfo_hz: float | None = None, phase: float | None = None):
    """Frequency/phase rotation; draws offset and phase from ``rng`` unless given."""
    x, orig = _unwrap(frame)
    if cfo_hz is None or phase is None:
        drawn_cfo, drawn_phi = _draw_cfo(profile, rng)
        cfo_hz = drawn_cfo if cfo_hz is None else cfo_hz
        phase = drawn_phi if phase is None else phase
    return _wrap(rotate(x, cfo_hz, phase, profile.sample_rate_hz), orig)


def noise_variance(esn0_db: float) -> float:
    return 10.0 ** (-float(esn0_db) / 10.0)


def add_awgn(frame, esn0_db, rng: np.random.Generator):
    """Add circular Gaussian noise of variance 10**(-EsN0/10) to a unit-power frame."""
    x, orig = _unwrap(frame)
    if esn0_db is None or (isinstance(esn0_db, str) and esn0_db == NOISELESS):
        return _wrap(np.array(x, copy=True), orig)
    sigma = np.sqrt(noise_variance(esn0_db) / 2.0)
    noise = rng.standard_normal(x.shape + (2,)) * sigma
    return _wrap(x + (noise[..., 0] + 1j * noise[..., 1]), orig)


def impair(frame, profile: ImpairmentProfile, rng: np.random.Generator,
           realization: ChannelRealization | None = None, esn0_db=None):
    """Channel, then CFO, then AWGN.

    ``realization`` defaults to an independent draw from ``rng``; pass one
    from a ``FadingProcess`` to keep Doppler continuity across frames.
    ``esn0_db`` overrides the profile's noise level.
    """
    x, orig = _unwrap(frame)
    if realization is None:
        realization = realize_channel(profile, rng) if not profile.is_identity else \
            ChannelRealization(np.ones(1, dtype=complex))
    if profile.multipath:
        x = convolve_taps(x, realization.tap_gains, profile)
    if realization.cfo_hz or realization.initial_phase:
        x = rotate(x, realization.cfo_hz, realization.initial_phase, profile.sample_rate_hz)
    level = profile.esn0_db if esn0_db is None else esn0_db
    x = add_awgn(x, level, rng)
    return _wrap(x, orig)
