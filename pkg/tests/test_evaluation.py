import math

import numpy as np
import pytest

from sefdm_cnn import radix2
from sefdm_cnn.cnn import ArchitectureDescriptor, StageSpec, init_model
from sefdm_cnn.dataset import NOISELESS_DDB, RECORD_DTYPE, Dataset
from sefdm_cnn.errors import ConfigurationError
from sefdm_cnn.evaluation import (
    ConfusionMatrix, EvalResult, accuracy_curve, counted_fft_cost, evaluate, fft_cost,
    score_predictions,
)


def fake_set(group, n_per_class, grid=(0, 100, 200), domain="time"):
    n_classes = 4 if group == "TypeI" else 7
    labels = np.repeat(np.arange(n_classes), n_per_class)
    rec = np.zeros(len(labels), RECORD_DTYPE)
    rec["label"] = labels
    rec["esn0_ddb"] = np.resize(np.asarray(grid), len(labels))
    rec["domain"] = 0 if domain == "time" else 1
    return Dataset(group, domain, 0, rec)


def test_oracle_classifier_is_diagonal():
    ds = fake_set("TypeI", 30)
    r = score_predictions("oracle", ds, ds.labels)
    assert r.accuracy == 1.0
    np.testing.assert_array_equal(r.confusion.counts, np.diag([30] * 4))
    assert all(p.accuracy == 1.0 for p in r.curve.points)


@pytest.mark.parametrize("group, n, expected, tol", [("TypeI", 800, 0.25, 0.03),
                                                     ("TypeII", 800, 1 / 7, 0.02)])
def test_random_classifier_chance(group, n, expected, tol):
    ds = fake_set(group, n)
    preds = np.random.default_rng(0).integers(0, ds.n_classes, len(ds))
    r = score_predictions("random", ds, preds)
    assert abs(r.accuracy - expected) < tol
    # row sums equal the per-class counts; accuracy = trace / total
    np.testing.assert_array_equal(r.confusion.counts.sum(axis=1), ds.class_counts())
    assert r.accuracy == np.trace(r.confusion.counts) / r.confusion.total


def test_curve_groups_by_esn0_and_is_sorted():
    labels = np.array([0, 1, 0, 1, 0, 1])
    preds = np.array([0, 0, 0, 1, 1, 1])
    ddb = np.array([200, 200, -50, -50, NOISELESS_DDB, NOISELESS_DDB])
    curve = accuracy_curve(labels, preds, ddb)
    assert curve.grid == [None, -5.0, 20.0]
    assert [p.accuracy for p in curve.points] == [0.5, 1.0, 0.5]
    assert [p.count for p in curve.points] == [2, 2, 2]
    assert curve.at(-5) == 1.0
    with pytest.raises(KeyError):
        curve.at(7)


def test_per_class_accuracy():
    cm = ConfusionMatrix.from_predictions([0, 0, 1, 1], [0, 1, 1, 1], 3)
    np.testing.assert_allclose(cm.per_class_accuracy[:2], [0.5, 1.0])
    assert np.isnan(cm.per_class_accuracy[2])
    assert cm.accuracy == 0.75


def test_result_round_trip():
    ds = fake_set("TypeII", 3)
    r = score_predictions("m", ds, np.zeros(len(ds), int), test_name="t", condition="transfer",
                          base="b")
    back = EvalResult.from_dict(r.to_dict())
    assert back.to_dict() == r.to_dict()
    assert r.class_names == ["OFDM", "0.95", "0.9", "0.85", "0.8", "0.75", "0.7"]


def test_evaluate_checks_domain_and_counts():
    d = ArchitectureDescriptor((StageSpec(2, 3, "max"), StageSpec(2, 3, "avg")), n_classes=4)
    model = init_model(d, group="TypeI", domain="time")
    ds = fake_set("TypeI", 5)
    r = evaluate(model, ds, name="untrained")
    assert r.confusion.total == 20
    with pytest.raises(ConfigurationError, match="domain"):
        evaluate(model, fake_set("TypeI", 5, domain="freq"))
    with pytest.raises(ConfigurationError):
        score_predictions("x", ds, np.zeros(3, int))


def test_fft_cost_values():
    assert fft_cost(1024) == (5120, 10240)
    assert fft_cost(2) == (1, 2)
    assert fft_cost(2048) == (11264, 22528)
    for bad in (0, 1, 3, 1000):
        with pytest.raises(ConfigurationError):
            fft_cost(bad)


def test_fft_cost_matches_instrumented_fft():
    for k in range(1, 13):
        n = 2 ** k
        assert counted_fft_cost(n) == fft_cost(n) == (n // 2 * k, n * k)


def test_instrumented_fft_is_an_fft():
    x = np.random.default_rng(0).standard_normal(64) + 1j
    np.testing.assert_allclose(radix2.fft(x), np.fft.fft(x), atol=1e-10)
    assert math.isclose(fft_cost(64)[0], 192)
