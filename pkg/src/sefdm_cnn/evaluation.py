"""Confusion matrices, accuracy-vs-Es/N0 curves and FFT cost accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import radix2
from .cnn.model import CnnModel, predict_proba
from .dataset import NOISELESS_DDB
from .errors import ConfigurationError
from .waveform import GROUP_ALPHAS


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class

    @classmethod
    def from_predictions(cls, labels, preds, n_classes: int) -> "ConfusionMatrix":
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (np.asarray(labels), np.asarray(preds)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    @property
    def per_class_accuracy(self) -> np.ndarray:
        rows = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.diag(self.counts) / rows


@dataclass
class CurvePoint:
    esn0_db: float | None  # None for noiseless records
    accuracy: float
    count: int


@dataclass
class AccuracyCurve:
    points: list = field(default_factory=list)

    def at(self, esn0_db: float) -> float:
        for p in self.points:
            if p.esn0_db is not None and abs(p.esn0_db - esn0_db) < 1e-9:
                return p.accuracy
        raise KeyError(f"no curve point at {esn0_db} dB")

    @property
    def grid(self) -> list:
        return [p.esn0_db for p in self.points]


@dataclass
class EvalResult:
    name: str
    group: str
    domain: str
    confusion: ConfusionMatrix
    curve: AccuracyCurve
    test_name: str = ""
    condition: str = "direct"
    base: str = ""

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    @property
    def class_names(self) -> list:
        return ["OFDM" if a == 1.0 else f"{a:g}" for a in GROUP_ALPHAS[self.group]]

    def to_dict(self) -> dict:
        return {
            "name": self.name, "group": self.group, "domain": self.domain,
            "test_name": self.test_name, "condition": self.condition, "base": self.base,
            "confusion": self.confusion.counts.tolist(),
            "curve": [[p.esn0_db, p.accuracy, p.count] for p in self.curve.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalResult":
        curve = AccuracyCurve([CurvePoint(e, a, n) for e, a, n in d["curve"]])
        return cls(d["name"], d["group"], d["domain"],
                   ConfusionMatrix(np.asarray(d["confusion"], dtype=np.int64)), curve,
                   d.get("test_name", ""), d.get("condition", "direct"), d.get("base", ""))


def accuracy_curve(labels, preds, esn0_ddb) -> AccuracyCurve:
    labels, preds, esn0_ddb = map(np.asarray, (labels, preds, esn0_ddb))
    points = []
    for level in sorted(set(esn0_ddb.tolist()), key=lambda v: (v != NOISELESS_DDB, v)):
        sel = esn0_ddb == level
        db = None if level == NOISELESS_DDB else level / 10
        points.append(CurvePoint(db, float(np.mean(labels[sel] == preds[sel])), int(sel.sum())))
    return AccuracyCurve(points)


def score_predictions(name: str, test_set, preds, **kw) -> EvalResult:
    """Aggregate predictions from any classifier over a test set."""
    preds = np.asarray(preds)
    if preds.shape != (len(test_set),):
        raise ConfigurationError("one prediction per record is required")
    cm = ConfusionMatrix.from_predictions(test_set.labels, preds, test_set.n_classes)
    curve = accuracy_curve(test_set.labels, preds, test_set.esn0_ddb)
    return EvalResult(name, test_set.group, test_set.domain, cm, curve, **kw)


def evaluate(model: CnnModel, test_set, name: str = "model", **kw) -> EvalResult:
    if model.domain is not None and test_set.domain != model.domain:
        raise ConfigurationError(f"test set domain {test_set.domain!r} != model domain {model.domain!r}")
    if model.group is not None and test_set.group != model.group:
        raise ConfigurationError(f"test set group {test_set.group!r} != model group {model.group!r}")
    preds = predict_proba(model, test_set.tensor()).argmax(axis=1) if len(test_set) else np.zeros(0, int)
    return score_predictions(name, test_set, preds, **kw)


def fft_cost(n_samples: int) -> tuple[int, int]:
    """(complex multiplications, complex additions) of a radix-2 FFT of length n."""
    if n_samples < 2 or not radix2.is_power_of_two(n_samples):
        raise ConfigurationError(f"FFT length must be a power of two >= 2, got {n_samples}")
    stages = int(math.log2(n_samples))
    return (n_samples // 2) * stages, n_samples * stages


def counted_fft_cost(n_samples: int) -> tuple[int, int]:
    """Operation counts observed while running the instrumented radix-2 FFT."""
    counter = radix2.OpCounter()
    radix2.fft(np.zeros(n_samples, dtype=complex), counter=counter)
    return counter.multiplications, counter.additions
