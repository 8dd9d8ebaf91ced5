"""Stacked 1D CNN classifier: Conv-BN-ReLU-Pool stages, dropout, dense, softmax."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigurationError, NumericalError
from . import layers

STANDARD_FILTERS = (16, 24, 32, 48, 64, 96, 128)
POOL_KINDS = ("max", "avg", "none")


@dataclass(frozen=True)
class StageSpec:
    filters: int
    kernel: int = 7
    pool: str = "max"

    def __post_init__(self):
        if self.filters < 1 or self.kernel < 1:
            raise ConfigurationError("stage filters and kernel must be positive")
        if self.pool not in POOL_KINDS:
            raise ConfigurationError(f"pool must be one of {POOL_KINDS}")


@dataclass(frozen=True)
class ArchitectureDescriptor:
    stages: tuple
    n_classes: int
    in_channels: int = 2
    input_len: int = 1024
    dropout: float = 0.5
    pool_width: int = 2
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        stages = tuple(s if isinstance(s, StageSpec) else StageSpec(**s) for s in self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages:
            raise ConfigurationError("at least one stage is required")
        if any(s.pool == "avg" for s in stages[:-1]):
            raise ConfigurationError("global average pooling is only allowed in the last stage")
        if self.n_classes < 2:
            raise ConfigurationError("need at least two classes")
        if not 0 <= self.dropout < 1:
            raise ConfigurationError("dropout must lie in [0, 1)")
        if self.feature_shape()[0] < 1:
            raise ConfigurationError("input too short for the pooling stack")

    @classmethod
    def standard(cls, n_classes: int, filters=STANDARD_FILTERS, kernel: int = 7, **kw):
        """Seven stages, max pooling in 1-6 and global average pooling in 7."""
        if len(filters) != 7:
            raise ConfigurationError("the classifier has exactly seven feature stages")
        stages = tuple(StageSpec(f, kernel, "max") for f in filters[:-1]) + \
            (StageSpec(filters[-1], kernel, "avg"),)
        return cls(stages, n_classes, **kw)

    def feature_shape(self) -> tuple:
        """(length, channels) after the last stage; length is 1 when globally pooled."""
        length = self.input_len
        for s in self.stages:
            if s.pool == "max":
                length //= self.pool_width
            elif s.pool == "avg":
                return (1, s.filters)
        return (length, self.stages[-1].filters)

    @property
    def feature_dim(self) -> int:
        length, ch = self.feature_shape()
        return length * ch

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = [asdict(s) for s in self.stages]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureDescriptor":
        return cls(**d)


TRAINABLE_SUFFIXES = ("conv.w", "conv.b", "bn.gamma", "bn.beta")


@dataclass
class CnnModel:
    descriptor: ArchitectureDescriptor
    params: dict
    group: str | None = None
    domain: str | None = None
    meta: dict = field(default_factory=dict)
    # bumped on every parameter update; caches record it to detect staleness
    version: int = 0

    @property
    def dtype(self):
        return self.params["fc.w"].dtype

    def trainable_names(self) -> list:
        return [k for k in self.params if k.endswith(TRAINABLE_SUFFIXES) or k.startswith("fc.")]

    def frozen_names(self) -> list:
        return [k for k in self.params if not k.startswith("fc.")]

    def astype(self, dtype) -> "CnnModel":
        m = self.copy()
        m.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return m

    def copy(self) -> "CnnModel":
        return CnnModel(self.descriptor, {k: v.copy() for k, v in self.params.items()},
                        self.group, self.domain, copy.deepcopy(self.meta), self.version)

    def param_hash(self, names=None) -> str:
        h = hashlib.sha256()
        for k in sorted(names if names is not None else self.params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k]).tobytes())
        return h.hexdigest()

    def n_parameters(self) -> int:
        return int(sum(self.params[k].size for k in self.trainable_names()))


def init_head(model: CnnModel, rng: np.random.Generator) -> None:
    d = model.descriptor
    dtype = model.dtype if "fc.w" in model.params else np.float32
    model.params["fc.w"] = (rng.standard_normal((d.feature_dim, d.n_classes)) *
                            np.sqrt(1.0 / d.feature_dim)).astype(dtype)
    model.params["fc.b"] = np.zeros(d.n_classes, dtype=dtype)


def init_model(descriptor: ArchitectureDescriptor, seed: int = 0, dtype=np.float32,
               group: str | None = None, domain: str | None = None) -> CnnModel:
    """Kaiming (fan-in) normal conv weights, zero biases, identity batch-norm."""
    rng = np.random.default_rng(seed)
    params = {}
    c_in = descriptor.in_channels
    for i, s in enumerate(descriptor.stages):
        fan_in = c_in * s.kernel
        params[f"s{i}.conv.w"] = (rng.standard_normal((s.kernel, c_in, s.filters)) *
                                  np.sqrt(2.0 / fan_in)).astype(dtype)
        params[f"s{i}.conv.b"] = np.zeros(s.filters, dtype=dtype)
        params[f"s{i}.bn.gamma"] = np.ones(s.filters, dtype=dtype)
        params[f"s{i}.bn.beta"] = np.zeros(s.filters, dtype=dtype)
        params[f"s{i}.bn.mean"] = np.zeros(s.filters, dtype=dtype)
        params[f"s{i}.bn.var"] = np.ones(s.filters, dtype=dtype)
        c_in = s.filters
    model = CnnModel(descriptor, params, group, domain)
    params["fc.w"] = np.zeros((1, 1), dtype=dtype)
    init_head(model, rng)
    return model


def _check_input(model: CnnModel, x: np.ndarray) -> np.ndarray:
    d = model.descriptor
    if x.ndim != 3 or x.shape[1] != d.in_channels or x.shape[2] != d.input_len:
        raise ConfigurationError(
            f"input shape {x.shape} does not match (batch, {d.in_channels}, {d.input_len})")
    # channel-last internally
    return np.ascontiguousarray(x.transpose(0, 2, 1), dtype=model.dtype)


def features(model: CnnModel, x: np.ndarray, train: bool = False):
    """Run the feature stages; returns (flat features, cache).

    In training mode batch statistics are used and the cache carries the
    per-stage batch mean/variance for the running-statistics update.
    """
    d = model.descriptor
    p = model.params
    h = _check_input(model, x)
    caches = []
    for i, s in enumerate(d.stages):
        c = {}
        h, c["conv"] = layers.conv_forward(h, p[f"s{i}.conv.w"], p[f"s{i}.conv.b"])
        running = None if train else (p[f"s{i}.bn.mean"], p[f"s{i}.bn.var"])
        h, c["bn"] = layers.batchnorm_forward(h, p[f"s{i}.bn.gamma"], p[f"s{i}.bn.beta"],
                                              d.bn_eps, running)
        h, c["relu"] = layers.relu_forward(h)
        if s.pool == "max":
            h, c["pool"] = layers.maxpool_forward(h, d.pool_width)
        elif s.pool == "avg":
            h, c["pool"] = layers.global_avgpool_forward(h)
        caches.append(c)
    shape = h.shape
    return h.reshape(h.shape[0], -1), {"stages": caches, "feature_shape": shape}


def head(model: CnnModel, feats: np.ndarray, rng: np.random.Generator | None = None):
    """Dropout (only when ``rng`` is given) and the dense layer."""
    h, mask = layers.dropout_forward(feats, model.descriptor.dropout, rng)
    logits, x_in = layers.dense_forward(h, model.params["fc.w"], model.params["fc.b"])
    return logits, {"mask": mask, "dense_in": x_in}


def forward(model: CnnModel, x: np.ndarray, mode: str = "inference",
            rng: np.random.Generator | None = None):
    """Logits for a (batch, channels, length) tensor.

    ``mode='train'`` uses batch statistics and, when ``rng`` is supplied,
    a fresh dropout mask; the returned cache feeds ``backward``.
    """
    if mode not in ("train", "inference"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    train = mode == "train"
    feats, fcache = features(model, x, train)
    logits, hcache = head(model, feats, rng if train else None)
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite logits; training has diverged")
    cache = {"features": fcache, "head": hcache, "train": train,
             "version": model.version} if train else None
    return logits, cache


def head_backward(model: CnnModel, hcache, dlogits):
    dh, dw, db = layers.dense_backward(dlogits, hcache["dense_in"], model.params["fc.w"])
    return layers.dropout_backward(dh, hcache["mask"]), {"fc.w": dw, "fc.b": db}


def backward(model: CnnModel, cache, dlogits) -> dict:
    """Gradients of every trainable parameter given d(loss)/d(logits)."""
    if cache is None or not cache.get("train"):
        raise ConfigurationError("backward needs the cache of a training-mode forward pass")
    if cache["version"] != model.version:
        raise ConfigurationError("stale cache: model parameters were replaced since forward")
    dh, grads = head_backward(model, cache["head"], dlogits)
    fcache = cache["features"]
    dh = dh.reshape(fcache["feature_shape"])
    d = model.descriptor
    for i in reversed(range(len(d.stages))):
        c = fcache["stages"][i]
        s = d.stages[i]
        if s.pool == "max":
            dh = layers.maxpool_backward(dh, c["pool"])
        elif s.pool == "avg":
            dh = layers.global_avgpool_backward(dh, c["pool"])
        dh = layers.relu_backward(dh, c["relu"])
        dh, grads[f"s{i}.bn.gamma"], grads[f"s{i}.bn.beta"] = layers.batchnorm_backward(dh, c["bn"])
        dh, grads[f"s{i}.conv.w"], grads[f"s{i}.conv.b"] = layers.conv_backward(dh, c["conv"])
    return grads


def update_running_stats(model: CnnModel, cache) -> None:
    d = model.descriptor
    m = d.bn_momentum
    for i, c in enumerate(cache["features"]["stages"]):
        _, _, _, mean, var, n = c["bn"]
        unbiased = var * (n / max(n - 1, 1))
        model.params[f"s{i}.bn.mean"] = ((1 - m) * model.params[f"s{i}.bn.mean"] + m * mean).astype(model.dtype)
        model.params[f"s{i}.bn.var"] = ((1 - m) * model.params[f"s{i}.bn.var"] + m * unbiased).astype(model.dtype)


def loss(logits: np.ndarray, labels) -> tuple:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ConfigurationError("one label per logit row is required")
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise ConfigurationError(f"labels must lie in [0, {logits.shape[1]})")
    return layers.cross_entropy(logits, labels)


def predict_proba(model: CnnModel, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, x.shape[0], batch_size):
        logits, _ = forward(model, x[start:start + batch_size], "inference")
        out.append(layers.softmax(logits.astype(np.float64)))
    if not out:
        return np.zeros((0, model.descriptor.n_classes))
    return np.concatenate(out)


def predict(model: CnnModel, record):
    """Class index and probability vector for one dataset record."""
    if model.domain is not None and record.domain != model.domain:
        raise ConfigurationError(f"record domain {record.domain!r} != model domain {model.domain!r}")
    iq = np.asarray(record.iq)
    x = np.stack([iq.real, iq.imag])[None]
    probs = predict_proba(model, x)[0]
    return int(np.argmax(probs)), probs
