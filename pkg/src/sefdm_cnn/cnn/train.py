"""Mini-batch SGD trainer with best-validation-epoch model selection."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import ConfigurationError, NumericalError
from .model import CnnModel, backward, features, forward, head, head_backward, loss, update_running_stats

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 0.01
    dropout: float = 0.5
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ConfigurationError("learning_rate must be >= 0 and momentum in [0, 1)")
        if not 0 <= self.dropout < 1:
            raise ConfigurationError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    # wall-clock seconds; not part of any persisted artifact
    seconds: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("seconds")
        return d


def _as_arrays(data):
    """Accept a Dataset or an (x, y) pair."""
    if isinstance(data, tuple):
        x, y = data
        return np.asarray(x), np.asarray(y, dtype=np.int64), None
    return data.tensor(), data.labels, data


def accuracy(model: CnnModel, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> tuple:
    """(accuracy, mean loss) in inference mode."""
    if len(y) == 0:
        return float("nan"), float("nan")
    correct, total_loss = 0, 0.0
    for s in range(0, len(y), batch_size):
        logits, _ = forward(model, x[s:s + batch_size], "inference")
        logits = logits.astype(np.float64)
        correct += int(np.sum(logits.argmax(axis=1) == y[s:s + batch_size]))
        total_loss += loss(logits, y[s:s + batch_size])[0] * len(logits)
    return correct / len(y), total_loss / len(y)


def _check_compatible(model: CnnModel, *datasets) -> None:
    for ds in datasets:
        if ds is None:
            continue
        if model.group is not None and ds.group != model.group:
            raise ConfigurationError(f"dataset group {ds.group} != model group {model.group}")
        if model.domain is not None and ds.domain != model.domain:
            raise ConfigurationError(f"dataset domain {ds.domain} != model domain {model.domain}")


def train(model: CnnModel, train_set, val_set, config: TrainConfig,
          head_only: bool = False, progress=None) -> tuple:
    """Train ``model`` (a copy is returned) and the per-epoch history.

    With ``head_only`` the feature stages run once in inference mode and
    only the dense layer is updated; everything else stays bit-identical.
    The returned parameters are those of the epoch with the best validation
    accuracy (earliest on ties); with no validation data the last epoch wins.
    """
    x_tr, y_tr, ds_tr = _as_arrays(train_set)
    x_va, y_va, ds_va = _as_arrays(val_set) if val_set is not None else (None, None, None)
    _check_compatible(model, ds_tr, ds_va)
    if len(y_tr) == 0:
        raise ConfigurationError("empty training set")
    n_classes = model.descriptor.n_classes
    if y_tr.min() < 0 or y_tr.max() >= n_classes:
        raise ConfigurationError("training labels exceed the model's class count")

    model = model.copy()
    if model.descriptor.dropout != config.dropout:
        model.descriptor = replace(model.descriptor, dropout=config.dropout)
    rng = np.random.default_rng(config.seed)
    shuffle_rng = np.random.default_rng(rng.integers(2**63))
    dropout_rng = np.random.default_rng(rng.integers(2**63))

    names = ["fc.w", "fc.b"] if head_only else model.trainable_names()
    velocity = {k: np.zeros_like(model.params[k]) for k in names}
    if head_only:
        f_tr = _features(model, x_tr)
        f_va = _features(model, x_va) if x_va is not None else None

    hist = History()
    best_acc, best_params = -1.0, None
    t0 = time.perf_counter()
    n = len(y_tr)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            if head_only:
                logits, hcache = head(model, f_tr[idx], dropout_rng)
                value, dlogits = loss(logits, y_tr[idx])
                grads = head_backward(model, hcache, dlogits.astype(model.dtype))[1]
            else:
                logits, cache = forward(model, x_tr[idx], "train", dropout_rng)
                value, dlogits = loss(logits, y_tr[idx])
                grads = backward(model, cache, dlogits.astype(model.dtype))
                update_running_stats(model, cache)
            if not np.isfinite(value):
                raise NumericalError(f"non-finite training loss at epoch {epoch + 1}, "
                                     f"batch starting {s}; lower the learning rate")
            losses.append(value)
            for k in names:
                v = velocity[k]
                v *= config.momentum
                v -= config.learning_rate * grads[k]
                model.params[k] += v
            model.version += 1
        hist.train_loss.append(float(np.mean(losses)))
        if x_va is not None and len(y_va):
            if head_only:
                acc, vloss = _head_accuracy(model, f_va, y_va)
            else:
                acc, vloss = accuracy(model, x_va, y_va)
        else:
            acc, vloss = float("nan"), float("nan")
        hist.val_accuracy.append(acc)
        hist.val_loss.append(vloss)
        score = acc if np.isfinite(acc) else epoch
        if score > best_acc:
            best_acc, hist.best_epoch = score, epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
        log.info("epoch %d loss %.4f val_acc %.4f", epoch + 1, hist.train_loss[-1], acc)
        if progress is not None:
            progress(epoch, hist)
    model.params = best_params
    model.version += 1
    hist.seconds = time.perf_counter() - t0
    return model, hist


def _features(model: CnnModel, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([features(model, x[s:s + batch_size], train=False)[0]
                           for s in range(0, len(x), batch_size)])


def _head_accuracy(model: CnnModel, f: np.ndarray, y: np.ndarray) -> tuple:
    logits, _ = head(model, f, None)
    logits = logits.astype(np.float64)
    return float(np.mean(logits.argmax(axis=1) == y)), loss(logits, y)[0]
