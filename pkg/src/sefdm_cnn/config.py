"""TOML pipeline configuration and the named dataset/model recipes."""

from __future__ import annotations

import copy
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .cnn.model import ArchitectureDescriptor
from .cnn.train import TrainConfig
from .dataset import DatasetManifest
from .errors import ConfigurationError
from .impairments import ImpairmentProfile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# recipe -> (group, domain, impaired, splits)
RECIPES = {
    "time-CNN-1": ("TypeI", "time", False, ("train", "val")),
    "time-CNN-2": ("TypeI", "time", True, ("train", "val")),
    "time-CNN-3": ("TypeII", "time", False, ("train", "val")),
    "time-CNN-4": ("TypeII", "time", True, ("train", "val")),
    "fre-CNN-1": ("TypeI", "freq", False, ("train", "val")),
    "fre-CNN-2": ("TypeI", "freq", True, ("train", "val")),
    "fre-CNN-3": ("TypeII", "freq", False, ("train", "val")),
    "fre-CNN-4": ("TypeII", "freq", True, ("train", "val")),
    "test-Type-I": ("TypeI", "time", True, ("test",)),
    "test-Type-II": ("TypeII", "time", True, ("test",)),
    "fre-test-Type-I": ("TypeI", "freq", True, ("test",)),
    "fre-test-Type-II": ("TypeII", "freq", True, ("test",)),
}
MODEL_RECIPES = tuple(r for r in RECIPES if "CNN" in r)
BUNDLED = ("defaults", "desk")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _read_toml(source) -> dict:
    if isinstance(source, str) and source in BUNDLED:
        text = resources.files("sefdm_cnn").joinpath(f"data/{source}.toml").read_text()
        return tomllib.loads(text)
    path = Path(source)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc


def load_config(*sources) -> dict:
    """Bundled defaults deep-merged with each source in order.

    A source is a TOML path, a bundled name ("desk") or a dict.
    """
    cfg = _read_toml("defaults")
    for src in sources:
        if src is None:
            continue
        cfg = _merge(cfg, src if isinstance(src, dict) else _read_toml(src))
    return cfg


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    return sec


def profile_a(cfg: dict) -> ImpairmentProfile:
    return ImpairmentProfile.from_dict(_section(cfg, "channel"))


def profile_b(cfg: dict) -> ImpairmentProfile:
    """Shifted target environment: the base channel with [transfer.channel] overrides."""
    shifted = _merge(_section(cfg, "channel"), _section(_section(cfg, "transfer"), "channel"))
    return ImpairmentProfile.from_dict(shifted)


def dataset_seed(master: int, tag: str) -> int:
    """Stable per-purpose seed; time/freq twins share the tag and hence the frames."""
    key = [int(master)] + list(tag.encode())
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0] >> 1)


def _twin_tag(recipe: str) -> str:
    return recipe.replace("fre-", "time-", 1) if recipe.startswith("fre-CNN") else \
        recipe.replace("fre-", "", 1)


def manifest_for(cfg: dict, recipe: str, scale: float = 1.0) -> DatasetManifest:
    if recipe not in RECIPES:
        raise ConfigurationError(f"unknown recipe {recipe!r}; choose from {sorted(RECIPES)}")
    group, domain, impaired, splits = RECIPES[recipe]
    ds = _section(cfg, "dataset")
    wf = _section(cfg, "waveform")

    def size(split):
        if split not in splits:
            return 0
        return max(1, int(round(ds.get(f"n_{split}", 0) * scale)))

    try:
        return DatasetManifest(
            group=group, domain=domain, impaired=impaired,
            n_train=size("train"), n_val=size("val"), n_test=size("test"),
            train_esn0_db=ds.get("train_esn0_db", 20.0),
            test_grid_db=tuple(ds.get("test_grid_db", ())),
            seed=dataset_seed(cfg.get("seed", 0), _twin_tag(recipe)),
            n_subcarriers=wf.get("n_subcarriers", 256), oversampling=wf.get("oversampling", 8),
            name=recipe)
    except TypeError as exc:
        raise ConfigurationError(f"invalid [dataset] values: {exc}") from exc


def target_manifest(cfg: dict, group: str, domain: str) -> DatasetManifest:
    """Shifted-environment sets: ``n_per_class`` adaptation frames plus a test sweep."""
    tr = _section(cfg, "transfer")
    ds = _section(cfg, "dataset")
    return DatasetManifest(group=group, domain=domain, impaired=True,
                           n_train=int(tr.get("n_per_class", 50)), n_val=0,
                           n_test=int(ds.get("n_test", 800)),
                           train_esn0_db=ds.get("train_esn0_db", 20.0),
                           test_grid_db=tuple(ds.get("test_grid_db", ())),
                           seed=dataset_seed(cfg.get("seed", 0), f"envB-{group}"),
                           name=f"envB-{group}-{domain}")


def descriptor_for(cfg: dict, n_classes: int) -> ArchitectureDescriptor:
    md = _section(cfg, "model")
    tr = _section(cfg, "train")
    return ArchitectureDescriptor.standard(n_classes, filters=tuple(md.get("filters", ())),
                                        kernel=int(md.get("kernel", 7)),
                                        dropout=float(tr.get("dropout", 0.5)))


def train_config(cfg: dict, seed: int | None = None) -> TrainConfig:
    tr = dict(_section(cfg, "train"))
    tr["seed"] = int(cfg.get("seed", 0) if seed is None else seed)
    return TrainConfig.from_dict(tr)


def transfer_config(cfg: dict, n_records: int, seed: int | None = None) -> TrainConfig:
    tr = _section(cfg, "transfer")
    base = _section(cfg, "train")
    bs = int(tr.get("batch_size", 0)) or min(128, n_records)
    # same optimiser as base training unless overridden
    return TrainConfig(epochs=int(tr.get("epochs", 10)), batch_size=max(1, bs),
                       learning_rate=float(tr.get("learning_rate", 0.01)),
                       momentum=float(tr.get("momentum", base.get("momentum", 0.0))),
                       dropout=float(base.get("dropout", 0.5)),
                       seed=int(cfg.get("seed", 0) if seed is None else seed))
