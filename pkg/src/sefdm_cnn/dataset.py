"""Labelled, sync-free datasets and the SEFC binary container.

SEFC layout (little-endian)::

    header  magic "SEFC" | version u16 | group u8 | domain u8 | class-count u8
            | record-count u64 | seed u64 | crc32(payload) u32
    record  label u8 | alpha_q u16 | esn0_ddb i16 | domain u8
            | iq 1024 x (I f32, Q f32)

``alpha_q`` is alpha*10000, ``esn0_ddb`` is Es/N0 in tenths of a dB with
-32768 meaning noiseless.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import radix2
from .errors import ChecksumError, ConfigurationError, DataError
from .impairments import (
    NOISELESS, ChannelRealization, FadingProcess, ImpairmentProfile, draw_frame_cfo, impair,
)
from .waveform import GROUP_ALPHAS, WaveformSpec, normalize_power, random_qpsk, signal_classes, synthesize

MAGIC = b"SEFC"
VERSION = 1
HEADER = struct.Struct("<4sHBBBQQI")
WINDOW = 1024
NOISELESS_DDB = -32768

GROUP_CODES = {"TypeI": 1, "TypeII": 2}
GROUP_NAMES = {v: k for k, v in GROUP_CODES.items()}
DOMAIN_CODES = {"time": 0, "freq": 1}
DOMAIN_NAMES = {v: k for k, v in DOMAIN_CODES.items()}
SPLIT_IDS = {"train": 0, "val": 1, "test": 2}

DEFAULT_GRID_DB = tuple(range(-20, 51, 5))

RECORD_DTYPE = np.dtype([
    ("label", "<u1"),
    ("alpha_q", "<u2"),
    ("esn0_ddb", "<i2"),
    ("domain", "<u1"),
    ("iq", "<f4", (2 * WINDOW,)),
])


@dataclass
class Record:
    label: int
    alpha_q: int
    esn0_ddb: int
    domain: str
    iq: np.ndarray  # complex64, length WINDOW

    @property
    def alpha(self) -> float:
        return self.alpha_q / 10000

    @property
    def esn0_db(self):
        return NOISELESS if self.esn0_ddb == NOISELESS_DDB else self.esn0_ddb / 10


def esn0_to_ddb(esn0_db) -> int:
    if esn0_db is None or esn0_db == NOISELESS:
        return NOISELESS_DDB
    return int(round(float(esn0_db) * 10))


@dataclass
class Dataset:
    """An SEFC file held in memory as a structured record array."""

    group: str
    domain: str
    seed: int
    records: np.ndarray = field(repr=False)

    @property
    def n_classes(self) -> int:
        return len(GROUP_ALPHAS[self.group])

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        for r in self.records:
            iq = r["iq"].view(np.complex64).copy()
            yield Record(int(r["label"]), int(r["alpha_q"]), int(r["esn0_ddb"]),
                         DOMAIN_NAMES[int(r["domain"])], iq)

    @property
    def labels(self) -> np.ndarray:
        return self.records["label"].astype(np.int64)

    @property
    def esn0_ddb(self) -> np.ndarray:
        return self.records["esn0_ddb"].astype(np.int64)

    def tensor(self, dtype=np.float32) -> np.ndarray:
        """CNN input, shape (n, 2, WINDOW) with channels (real, imag)."""
        iq = self.records["iq"].reshape(len(self), WINDOW, 2)
        return np.ascontiguousarray(iq.transpose(0, 2, 1), dtype=dtype)

    def subset(self, mask) -> "Dataset":
        return Dataset(self.group, self.domain, self.seed, self.records[mask])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def sha256(self) -> str:
        return hashlib.sha256(encode(self)).hexdigest()

    @classmethod
    def from_records(cls, group: str, domain: str, seed: int, records) -> "Dataset":
        arr = np.zeros(len(records), dtype=RECORD_DTYPE)
        for i, r in enumerate(records):
            arr[i]["label"] = r.label
            arr[i]["alpha_q"] = r.alpha_q
            arr[i]["esn0_ddb"] = r.esn0_ddb
            arr[i]["domain"] = DOMAIN_CODES[r.domain]
            arr[i]["iq"] = np.asarray(r.iq, dtype=np.complex64).view(np.float32)
        return cls(group, domain, seed, arr)


def truncate(frame, rng: np.random.Generator | None = None, offset: int | None = None,
             window: int = WINDOW) -> np.ndarray:
    """Random-offset window of ``window`` samples from a ``2*window`` frame."""
    x = np.asarray(getattr(frame, "samples", frame))
    if x.shape[-1] != 2 * window:
        raise ConfigurationError(f"frame length must be {2 * window}, got {x.shape[-1]}")
    if offset is None:
        offset = int(rng.integers(0, window + 1))
    if not 0 <= offset <= window:
        raise ConfigurationError(f"offset {offset} outside [0, {window}]")
    return x[..., offset:offset + window]


def to_frequency(samples) -> np.ndarray:
    """Unitary FFT of a power-of-two length window."""
    x = np.asarray(samples)
    n = x.shape[-1]
    if not radix2.is_power_of_two(n):
        raise ConfigurationError(f"FFT length must be a power of two, got {n}")
    return np.fft.fft(x, axis=-1) / np.sqrt(n)


def encode(ds: Dataset) -> bytes:
    payload = np.ascontiguousarray(ds.records, dtype=RECORD_DTYPE).tobytes()
    header = HEADER.pack(MAGIC, VERSION, GROUP_CODES[ds.group], DOMAIN_CODES[ds.domain],
                         ds.n_classes, len(ds.records), ds.seed & (2**64 - 1),
                         zlib.crc32(payload))
    return header + payload


def write_dataset(ds: Dataset, path) -> Path:
    labels = ds.labels
    if len(labels) and labels.max() >= ds.n_classes:
        raise ConfigurationError("label exceeds class count of the group")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(ds))
    return path


def decode(data: bytes) -> Dataset:
    if len(data) < HEADER.size:
        raise DataError("truncated SEFC header")
    magic, version, group, domain, n_classes, count, seed, crc = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}, not an SEFC file")
    if version != VERSION:
        raise DataError(f"unsupported SEFC version {version}")
    if group not in GROUP_NAMES or domain not in DOMAIN_NAMES:
        raise DataError("corrupt SEFC header (group/domain code)")
    payload = data[HEADER.size:]
    if len(payload) != count * RECORD_DTYPE.itemsize:
        raise DataError(f"truncated SEFC payload: expected {count} records")
    if zlib.crc32(payload) != crc:
        raise ChecksumError("SEFC payload checksum mismatch")
    records = np.frombuffer(payload, dtype=RECORD_DTYPE).copy()
    ds = Dataset(GROUP_NAMES[group], DOMAIN_NAMES[domain], seed, records)
    if ds.n_classes != n_classes:
        raise DataError("class count does not match group")
    return ds


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    return decode(path.read_bytes())


def read_dataset(path):
    """Iterate the records of an SEFC file in stored order."""
    return iter(load_dataset(path))


@dataclass
class DatasetManifest:
    group: str = "TypeI"
    domain: str = "time"
    impaired: bool = False
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 0
    train_esn0_db: float | str = 20.0
    test_grid_db: tuple = DEFAULT_GRID_DB
    seed: int = 0
    n_subcarriers: int = 256
    oversampling: int = 8
    name: str = "custom"

    def __post_init__(self):
        if self.group not in GROUP_CODES:
            raise ConfigurationError(f"unknown group {self.group!r}")
        if self.domain not in DOMAIN_CODES:
            raise ConfigurationError(f"unknown domain {self.domain!r}")
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ConfigurationError("split sizes must be non-negative")
        if self.n_subcarriers * self.oversampling != 2 * WINDOW:
            raise ConfigurationError(
                f"frame length n_subcarriers*oversampling must be {2 * WINDOW}")
        if self.n_test and not self.impaired:
            raise ConfigurationError("testing recipes sweep Es/N0 and need the channel/hardware model")
        self.test_grid_db = tuple(float(g) for g in self.test_grid_db)
        if list(self.test_grid_db) != sorted(self.test_grid_db) or not self.test_grid_db:
            raise ConfigurationError("test grid must be non-empty and ascending")

    def splits(self) -> dict:
        return {s: n for s, n in (("train", self.n_train), ("val", self.n_val),
                                  ("test", self.n_test)) if n > 0}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["test_grid_db"] = list(self.test_grid_db)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown manifest keys: {sorted(unknown)}")
        return cls(**d)


def esn0_schedule(n_frames: int, grid) -> list:
    """Even, deterministic division of ``n_frames`` over the grid (remainder to the lowest points)."""
    grid = list(grid)
    base, extra = divmod(n_frames, len(grid))
    out = []
    for i, g in enumerate(grid):
        out.extend([g] * (base + (1 if i < extra else 0)))
    return out


def frame_rng(seed: int, split: str, class_index: int, frame_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(SPLIT_IDS[split], class_index, frame_index))
    return np.random.Generator(np.random.PCG64(ss))


def generate_split(manifest: DatasetManifest, profile: ImpairmentProfile, split: str,
                   n_per_class: int) -> Dataset:
    """Frames for every class of one split; records are class-major."""
    classes = signal_classes(manifest.group)
    n_classes = len(classes)
    frame_len = manifest.n_subcarriers * manifest.oversampling
    frame_s = frame_len / profile.sample_rate_hz
    fading = None
    if manifest.impaired and profile.multipath:
        ss = np.random.SeedSequence(manifest.seed, spawn_key=(SPLIT_IDS[split], 0xFADE))
        fading = FadingProcess(profile, np.random.Generator(np.random.PCG64(ss)))
    if split == "test":
        levels = esn0_schedule(n_per_class, manifest.test_grid_db)
    else:
        levels = [manifest.train_esn0_db if manifest.impaired else NOISELESS] * n_per_class

    records = np.zeros(n_classes * n_per_class, dtype=RECORD_DTYPE)
    for sc in classes:
        spec = WaveformSpec(manifest.n_subcarriers, sc.alpha, manifest.oversampling)
        rngs = [frame_rng(manifest.seed, split, sc.index, i) for i in range(n_per_class)]
        symbols = np.stack([random_qpsk(spec.n_subcarriers, r) for r in rngs])
        frames = normalize_power(synthesize(spec, symbols))
        windows = np.empty((n_per_class, WINDOW), dtype=complex)
        for i, r in enumerate(rngs):
            x = frames[i]
            if manifest.impaired:
                gains = np.ones(1, complex)
                if fading is not None:
                    # frames of all classes interleave on one time axis
                    gains = fading.gains((i * n_classes + sc.index) * frame_s)[0]
                cfo, phase = draw_frame_cfo(profile, r)
                x = impair(x, profile, r, ChannelRealization(gains, cfo, phase), esn0_db=levels[i])
            windows[i] = truncate(x, r)
        if manifest.domain == "freq":
            windows = to_frequency(windows)
        sl = slice(sc.index * n_per_class, (sc.index + 1) * n_per_class)
        records["label"][sl] = sc.index
        records["alpha_q"][sl] = int(round(sc.alpha * 10000))
        records["esn0_ddb"][sl] = [esn0_to_ddb(v) for v in levels]
        records["domain"][sl] = DOMAIN_CODES[manifest.domain]
        records["iq"][sl] = windows.astype(np.complex64).view(np.float32)
    return Dataset(manifest.group, manifest.domain, manifest.seed, records)


def build_dataset(manifest: DatasetManifest, profile: ImpairmentProfile | None = None,
                  out_dir=None, prefix: str | None = None) -> dict:
    """Generate every non-empty split; writes ``<prefix>-<split>.sefc`` when ``out_dir`` is given.

    Returns a mapping split -> Dataset (or Path when written).
    """
    if profile is None:
        profile = ImpairmentProfile() if manifest.impaired else ImpairmentProfile.identity()
    if not manifest.impaired and not profile.is_identity:
        raise ConfigurationError("clean recipe given a non-identity impairment profile")
    out = {}
    for split, n in manifest.splits().items():
        ds = generate_split(manifest, profile, split, n)
        if out_dir is None:
            out[split] = ds
        else:
            out[split] = write_dataset(ds, Path(out_dir) / f"{prefix or manifest.name}-{split}.sefc")
    if out_dir is not None:
        meta = {"manifest": manifest.to_dict(), "profile": profile.to_dict(),
                "files": {s: p.name for s, p in out.items()}}
        Path(out_dir, f"{prefix or manifest.name}.manifest.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def manifest_hash(manifest: DatasetManifest, profile: ImpairmentProfile) -> str:
    blob = json.dumps({"manifest": manifest.to_dict(), "profile": profile.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()
