"""Head-only fine-tuning of a trained classifier for a new environment."""

from __future__ import annotations

import time
import warnings

import numpy as np

from .cnn.io import model_hash
from .cnn.model import CnnModel, init_head
from .cnn.train import History, TrainConfig, train
from .errors import ConfigurationError


def default_config(n_records: int, seed: int = 0, dropout: float = 0.5) -> TrainConfig:
    return TrainConfig(epochs=10, batch_size=max(1, min(128, n_records)), learning_rate=0.01,
                       dropout=dropout, seed=seed)


def fine_tune(model: CnnModel, target_set, config: TrainConfig | None = None,
              val_set=None) -> tuple[CnnModel, History]:
    """Replace and retrain the dense/softmax head on ``target_set``.

    Feature stages, including batch-norm running statistics, are copied
    bit-exactly.  The dense layer is re-initialised from ``config.seed``
    and trained with dropout active.
    """
    if len(target_set) == 0:
        raise ConfigurationError("empty target set")
    if target_set.group != model.group or target_set.domain != model.domain:
        raise ConfigurationError(
            f"target set ({target_set.group}/{target_set.domain}) does not match "
            f"model ({model.group}/{model.domain})")
    counts = target_set.class_counts()
    if config is None:
        config = default_config(len(target_set), dropout=model.descriptor.dropout)
    degenerate = int(np.count_nonzero(counts)) < 2
    if degenerate:
        warnings.warn("target set covers fewer than two classes; the adapted head can only "
                      "reach re-initialised baseline accuracy", RuntimeWarning, stacklevel=2)

    base_hash = model_hash(model)
    fresh = model.copy()
    init_head(fresh, np.random.default_rng(config.seed))
    t0 = time.perf_counter()
    adapted, hist = train(fresh, target_set, val_set, config, head_only=True)
    hist.seconds = time.perf_counter() - t0
    adapted.meta = dict(model.meta)
    adapted.meta["provenance"] = {
        "base_model_sha256": base_hash,
        "target_sha256": target_set.sha256(),
        "target_per_class": [int(c) for c in counts],
        "degenerate_target": degenerate,
        "fine_tune_config": config.to_dict(),
    }
    return adapted, hist
